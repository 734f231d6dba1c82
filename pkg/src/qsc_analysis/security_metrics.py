"""
Key-security metrics: generalised unicity distances, DSR/QNDM bounds and the
data-locking comparison.

A unicity distance is only meaningful between ``|K| / C1`` and the exhaustive
search ceiling ``2^|K|``. When the per-slot capacity ``C1`` is so small that the
formula would exceed the ceiling (or drops below the collapse threshold), the
result is the typed "capped" sentinel of :class:`UnicityBound`, never ``inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .constellation import DEFAULT_LAMBDA, build_qndm, build_y00, masking_metrics
from .errors import InvalidParameterError
from .quantum_detection import (
    block_ensemble,
    data_mixtures,
    helstrom_binary_mixed,
    holevo_covariant,
    holevo_information,
    psk_overlaps,
    srm_channel,
    srm_error_covariant,
)
from .receivers import (
    HETERODYNE,
    UniformChannelSpec,
    bob_error,
    capacity_uniform,
    dsr_capacity,
    eve_error_mary,
    uniform_epsilon,
)

__all__ = [
    "DEFAULT_COLLAPSE_THRESHOLD",
    "SCENARIOS",
    "UnicityBound",
    "SecurityReport",
    "unicity_lower_bound",
    "dsr_unicity",
    "qndm_unicity",
    "locking_eta",
    "locking_key_requirement",
    "eta_asymptotic",
    "noiseless_kpa_slots",
    "analyze_scenario",
    "locking_report",
]

SCHEMA = "qsc-security-report/1"
SCENARIOS = ("y00", "qndm", "dsr", "locking")

DEFAULT_COLLAPSE_THRESHOLD = 1e-3

# Mixed-state Helstrom needs the span of every constellation point.
MAX_SPAN_STATES = 2048


@dataclass(frozen=True)
class UnicityBound:
    """Lower bound on the generalised unicity distance, in slots."""

    key_bits: int
    c1: float
    capped: bool
    slots: float | None
    formula_slots: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "key_bits": self.key_bits,
            "c1": self.c1,
            "capped": self.capped,
            "slots": self.slots,
            "formula_slots": self.formula_slots,
            "cap_log2": self.key_bits,
        }

    def __str__(self) -> str:
        if self.capped:
            return f"capped at 2^{self.key_bits}"
        return f"{self.slots:.6g}"


def _check_key_bits(name: str, key_bits: Any, minimum: int) -> int:
    if isinstance(key_bits, bool) or int(key_bits) != key_bits or key_bits < minimum:
        raise InvalidParameterError(name, key_bits, f"must be an integer >= {minimum}")
    return int(key_bits)


def unicity_lower_bound(
    key_bits: int, c1: float, collapse_threshold: float = DEFAULT_COLLAPSE_THRESHOLD
) -> UnicityBound:
    """Slots of observation before a key of ``key_bits`` can be singled out.

    Args:
        key_bits: Key length |K| in bits.
        c1: Per-slot capacity of Eve's channel in bits.
        collapse_threshold: Capacities below this cap the bound.

    Returns:
        ``|K| / C1`` slots, or the capped sentinel when that exceeds ``2^|K|``
        or ``c1`` is below ``collapse_threshold``.
    """
    key_bits = _check_key_bits("key_bits", key_bits, 0)
    if not c1 >= 0:
        raise InvalidParameterError("c1", c1, "must be >= 0")
    if key_bits == 0:
        return UnicityBound(0, c1, capped=False, slots=0.0, formula_slots=0.0)
    formula = key_bits / c1 if c1 > 0 else None
    capped = c1 <= math.ldexp(key_bits, -key_bits) or c1 < collapse_threshold
    return UnicityBound(
        key_bits,
        c1,
        capped=capped,
        slots=None if capped else formula,
        formula_slots=formula,
    )


def dsr_unicity(
    key_bits: int,
    amplitude: float,
    r_p: float,
    sigma_he: float = HETERODYNE.sigma,
    collapse_threshold: float = DEFAULT_COLLAPSE_THRESHOLD,
) -> UnicityBound:
    """Unicity bound with the wedge-approximation DSR capacity as C1."""
    c1 = dsr_capacity(amplitude, r_p, sigma_he)
    return unicity_lower_bound(key_bits, c1, collapse_threshold)


def qndm_unicity(
    key_bits_1: int,
    key_bits_2: int,
    c1: float,
    collapse_threshold: float = DEFAULT_COLLAPSE_THRESHOLD,
) -> tuple[UnicityBound, UnicityBound]:
    """Independent bounds for the two QNDM keys K_S1 and K_S2."""
    _check_key_bits("key_bits_1", key_bits_1, 1)
    _check_key_bits("key_bits_2", key_bits_2, 1)
    return (
        unicity_lower_bound(key_bits_1, c1, collapse_threshold),
        unicity_lower_bound(key_bits_2, c1, collapse_threshold),
    )


def locking_eta(key_entropy: float, info_with_key: float, info_without_key: float) -> float:
    """``H(K) / (I_with - I_without)``; below 1 the key locks more than it carries."""
    gap = info_with_key - info_without_key
    if not gap > 0:
        raise InvalidParameterError(
            "info_with_key", info_with_key, "must exceed the keyless accessible information"
        )
    return key_entropy / gap


def locking_key_requirement(epsilon: float) -> float:
    """Key entropy ``4 log2(1/epsilon)`` needed to lock to within ``epsilon``."""
    if not 0.0 < epsilon <= 1.0:
        raise InvalidParameterError("epsilon", epsilon, "must lie in (0, 1]")
    return 4.0 * math.log2(1.0 / epsilon)


def eta_asymptotic(n: int) -> float:
    """Large-n locking ratio ``log2(n) / n`` for a key-selected BB84 basis on n qubits."""
    if isinstance(n, bool) or int(n) != n or n < 2:
        raise InvalidParameterError("n", n, "must be an integer >= 2")
    return math.log2(n) / n


def noiseless_kpa_slots(key_bits: int, M: int) -> int:
    """Slots after which a noiseless known-plaintext search leaves one key."""
    key_bits = _check_key_bits("key_bits", key_bits, 1)
    M = _check_key_bits("M", M, 1)
    return math.ceil(key_bits / math.log2(2 * M))


@dataclass(frozen=True)
class SecurityReport:
    scenario: str
    key_bits: int
    inputs: dict[str, Any]
    c1_bits_per_slot: float | None = None
    c1_provenance: str | None = None
    unicity: tuple[UnicityBound, ...] = ()
    eta: float | None = None
    conditional_entropy: float | None = None
    metrics: dict[str, Any] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @property
    def unicity_lower(self) -> UnicityBound | None:
        return self.unicity[0] if self.unicity else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "scenario": self.scenario,
            "inputs": dict(self.inputs),
            "key_bits": self.key_bits,
            "c1_bits_per_slot": self.c1_bits_per_slot,
            "c1_provenance": self.c1_provenance,
            "unicity": [bound.to_dict() for bound in self.unicity],
            "unicity_cap_log2": self.key_bits,
            "eta": self.eta,
            "conditional_entropy": self.conditional_entropy,
            "metrics": dict(self.metrics),
            "notes": list(self.notes),
        }


def _psk_metrics(M: int, amplitude: float, osk: bool, notes: list[str]) -> dict[str, Any]:
    n_points = 2 * M
    overlaps = psk_overlaps(n_points, amplitude)
    metrics: dict[str, Any] = {
        "bob_error": bob_error(amplitude),
        "eve_mary_error": eve_error_mary(M, amplitude, "y00"),
        "srm_error": srm_error_covariant(n_points, overlaps),
        "holevo": holevo_covariant(n_points, overlaps),
    }
    if n_points <= MAX_SPAN_STATES:
        metrics["eve_binary_error"] = helstrom_binary_mixed(*data_mixtures(build_y00(M, amplitude), osk))
    else:
        metrics["eve_binary_error"] = None
        notes.append(f"eve_binary_error skipped: {n_points} states exceed {MAX_SPAN_STATES}")
    return metrics


def analyze_scenario(
    scenario: str,
    M: int,
    amplitude: float,
    key_bits: int = 256,
    *,
    key_bits_2: int | None = None,
    r_p: float | None = None,
    lam: float = DEFAULT_LAMBDA,
    osk: bool = False,
    sigma_he: float = HETERODYNE.sigma,
    collapse_threshold: float = DEFAULT_COLLAPSE_THRESHOLD,
) -> SecurityReport:
    """Assemble the analytic security report for a Y-00, QNDM or DSR configuration."""
    if scenario not in ("y00", "qndm", "dsr"):
        raise InvalidParameterError("scenario", scenario, "must be 'y00', 'qndm' or 'dsr'")
    key_bits = _check_key_bits("key_bits", key_bits, 1)
    notes: list[str] = []
    inputs: dict[str, Any] = {
        "M": M,
        "amplitude": amplitude,
        "key_bits": key_bits,
        "lambda": lam,
        "osk": osk,
        "sigma_he": sigma_he,
    }

    if scenario == "qndm":
        constellation = build_qndm(M, amplitude)
        key_bits_2 = key_bits if key_bits_2 is None else key_bits_2
        inputs["key_bits_2"] = key_bits_2
        block = block_ensemble(constellation, 1)
        metrics: dict[str, Any] = {
            "bob_error": bob_error(amplitude),
            "eve_mary_error": eve_error_mary(M, amplitude, "qndm"),
            "srm_error": srm_channel(block).error_probability(),
            "holevo": holevo_information(block),
        }
        if constellation.n_points <= MAX_SPAN_STATES:
            metrics["eve_binary_error"] = helstrom_binary_mixed(*data_mixtures(constellation, osk))
        else:
            metrics["eve_binary_error"] = None
            notes.append(
                f"eve_binary_error skipped: {constellation.n_points} states exceed {MAX_SPAN_STATES}"
            )
        epsilon = uniform_epsilon(M, amplitude, "qndm", sigma_he**2 / 2.0)
        c1 = capacity_uniform(UniformChannelSpec(M, epsilon))
        provenance = "analytic:uniform-channel"
        unicity = qndm_unicity(key_bits, key_bits_2, c1, collapse_threshold)
    else:
        constellation = build_y00(M, amplitude)
        metrics = _psk_metrics(M, amplitude, osk, notes)
        if scenario == "dsr":
            if r_p is None:
                raise InvalidParameterError("r_p", r_p, "required for the dsr scenario")
            inputs["r_p"] = r_p
            c1 = dsr_capacity(amplitude, r_p, sigma_he)
            provenance = "analytic:dsr-wedge"
        else:
            epsilon = uniform_epsilon(M, amplitude, "y00", sigma_he**2 / 2.0)
            c1 = capacity_uniform(UniformChannelSpec(M, epsilon))
            provenance = "analytic:uniform-channel"
        unicity = (unicity_lower_bound(key_bits, c1, collapse_threshold),)

    metrics["masking"] = masking_metrics(constellation, sigma_he, lam).to_dict()
    return SecurityReport(
        scenario=scenario,
        key_bits=key_bits,
        inputs=inputs,
        c1_bits_per_slot=c1,
        c1_provenance=provenance,
        unicity=unicity,
        metrics=metrics,
        notes=tuple(notes),
    )


def locking_report(n: int, key_bits: int = 1, epsilon: float | None = None) -> SecurityReport:
    """BB84-basis data locking: the keyed reader gets n bits, the keyless one at most n/2."""
    n = _check_key_bits("n", n, 2)
    key_bits = _check_key_bits("key_bits", key_bits, 1)
    info_with = float(n)
    info_without = n / 2.0
    eta = locking_eta(key_bits, info_with, info_without)
    return SecurityReport(
        scenario="locking",
        key_bits=key_bits,
        inputs={"n": n, "key_bits": key_bits, "epsilon": epsilon},
        eta=eta,
        conditional_entropy=key_bits / eta,
        metrics={
            "info_with_key": info_with,
            "info_without_key": info_without,
            "eta_asymptotic": eta_asymptotic(n),
            "key_requirement": None if epsilon is None else locking_key_requirement(epsilon),
        },
    )
