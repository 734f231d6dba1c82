"""
Monte Carlo pipeline: Alice's keyed encoder, an ideal channel, Bob's keyed
homodyne decoder and Eve's keyless heterodyne receiver.

Slots are processed in shards of ``TrialConfig.shard_size``. Every shard draws
its noise from ``SeedSequence(master_seed, spawn_key=(NOISE, shard))`` and shard
results are reduced in shard order, so a run is bit-identical whatever the
number of worker threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator

import numpy as np
from scipy.stats import binomtest

from .constellation import (
    DEFAULT_LAMBDA,
    DsrConfig,
    QndmConstellation,
    Y00Constellation,
    build_constellation,
    dither_phases,
    masking_metrics,
)
from .errors import InvalidParameterError
from .keystream import (
    GENERATOR_KINDS,
    KeystreamGenerator,
    RunningKeys,
    generate_keystream,
    key_from_seed,
)
from .receivers import (
    HETERODYNE,
    HOMODYNE,
    UniformChannelSpec,
    bob_error,
    capacity_uniform,
    eve_error_mary,
    eve_neighbour_error,
    uniform_epsilon,
)

__all__ = [
    "TRACE_COLUMNS",
    "TrialConfig",
    "SlotRecord",
    "SlotTable",
    "BobResult",
    "MiEstimate",
    "SimulationReport",
    "TrialResult",
    "alice_encode",
    "bob_receive",
    "eve_receive",
    "eve_decide",
    "empirical_mi",
    "make_plaintext",
    "parse_scheme",
    "running_keys_for",
    "stream_generator",
    "run_trial",
]

SCHEMA = "qsc-simulation-report/1"

PLAINTEXT_SOURCES = ("fixed", "random", "provided")
EVE_MODES = ("running_key", "data_binary")

TRACE_COLUMNS = (
    "slot",
    "theta",
    "bit",
    "bob_sample",
    "eve_re",
    "eve_im",
    "bob_decision",
    "eve_phase_decision",
    "eve_bit_decision",
)

# spawn_key roots of the independent random streams of a run
_KEYS, _PLAINTEXT, _NOISE = 0, 1, 2

DEFAULT_SHARD_SIZE = 65536


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def parse_scheme(scheme: str) -> tuple[str, bool, bool]:
    tokens = [t for t in scheme.strip().lower().split("+") if t]
    if not tokens:
        raise InvalidParameterError("scheme", scheme, "must not be empty")
    base = tokens[0] if tokens[0] in ("y00", "qndm") else "y00"
    modifiers = tokens[1:] if tokens[0] in ("y00", "qndm") else tokens
    unknown = set(modifiers) - {"osk", "dsr"}
    if unknown or len(modifiers) != len(set(modifiers)):
        raise InvalidParameterError(
            "scheme", scheme, "expected y00|qndm optionally followed by +osk and/or +dsr"
        )
    return base, "osk" in modifiers, "dsr" in modifiers


@dataclass(frozen=True, eq=False)
class TrialConfig:
    """Everything that determines a simulation run, including its randomness."""

    scheme: str
    M: int
    amplitude: float
    n_slots: int
    master_seed: int
    plaintext_source: str = "random"
    fixed_bit: int = 0
    plaintext: np.ndarray | None = field(default=None, repr=False)
    key_bits: int = 16
    generator: str = "lfsr"
    key: int | None = None
    key2: int | None = None
    osk_key: int | None = None
    osk_shared_seed: bool = False
    dsr_strength: float = 0.0
    noiseless: bool = False
    shard_size: int = DEFAULT_SHARD_SIZE

    def __post_init__(self) -> None:
        _, _, dsr = parse_scheme(self.scheme)
        if isinstance(self.n_slots, bool) or int(self.n_slots) != self.n_slots or self.n_slots < 1:
            raise InvalidParameterError("n_slots", self.n_slots, "must be an integer >= 1")
        if isinstance(self.master_seed, bool) or int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise InvalidParameterError("master_seed", self.master_seed, "must be a non-negative integer")
        if self.plaintext_source not in PLAINTEXT_SOURCES:
            raise InvalidParameterError(
                "plaintext_source", self.plaintext_source, f"must be one of {PLAINTEXT_SOURCES}"
            )
        if self.fixed_bit not in (0, 1):
            raise InvalidParameterError("fixed_bit", self.fixed_bit, "must be 0 or 1")
        if self.plaintext_source == "provided":
            if self.plaintext is None:
                raise InvalidParameterError("plaintext", None, "required when plaintext_source='provided'")
            plaintext = np.asarray(self.plaintext, dtype=np.uint8)
            if plaintext.shape != (self.n_slots,):
                raise InvalidParameterError(
                    "plaintext", plaintext.shape, f"expected {self.n_slots} bits"
                )
            if np.any(plaintext > 1):
                raise InvalidParameterError("plaintext", "...", "bits must be 0 or 1")
            object.__setattr__(self, "plaintext", plaintext)
        if self.generator not in GENERATOR_KINDS:
            raise InvalidParameterError("generator", self.generator, f"must be one of {GENERATOR_KINDS}")
        if self.shard_size < 1:
            raise InvalidParameterError("shard_size", self.shard_size, "must be >= 1")
        if dsr and not self.dsr_strength > 0:
            raise InvalidParameterError("dsr_strength", self.dsr_strength, "must be > 0 with +dsr")
        if not dsr and self.dsr_strength:
            raise InvalidParameterError("dsr_strength", self.dsr_strength, "only valid with +dsr")
        object.__setattr__(self, "n_slots", int(self.n_slots))
        # validates M and amplitude for the chosen base scheme
        self.constellation
        self.dsr

    @property
    def base(self) -> str:
        return parse_scheme(self.scheme)[0]

    @property
    def osk(self) -> bool:
        return parse_scheme(self.scheme)[1]

    @property
    def uses_dsr(self) -> bool:
        return parse_scheme(self.scheme)[2]

    @cached_property
    def constellation(self) -> Y00Constellation | QndmConstellation:
        return build_constellation(self.base, self.M, self.amplitude)

    @cached_property
    def dsr(self) -> DsrConfig | None:
        if not self.uses_dsr:
            return None
        return DsrConfig(self.dsr_strength, self.amplitude, sigma_he=HETERODYNE.sigma)

    @property
    def n_shards(self) -> int:
        return math.ceil(self.n_slots / self.shard_size)

    def seed_sequence(self, *spawn_key: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=spawn_key)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scheme": self.scheme,
            "M": self.M,
            "amplitude": self.amplitude,
            "n_slots": self.n_slots,
            "master_seed": self.master_seed,
            "plaintext_source": self.plaintext_source,
            "fixed_bit": self.fixed_bit if self.plaintext_source == "fixed" else None,
            "key_bits": self.key_bits,
            "generator": self.generator,
            "osk_shared_seed": self.osk_shared_seed,
            "dsr_strength": self.dsr_strength if self.uses_dsr else None,
            "noiseless": self.noiseless,
            "shard_size": self.shard_size,
        }


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SlotRecord:
    slot_index: int
    true_phase: float
    plaintext_bit: int
    bob_sample: float
    eve_sample: complex
    bob_decision: int
    eve_phase_decision: int
    eve_bit_decision: int


@dataclass(frozen=True, eq=False)
class SlotTable:
    """Columnar slot transcript."""

    slot: np.ndarray
    theta: np.ndarray
    bit: np.ndarray
    bob_sample: np.ndarray
    eve_sample: np.ndarray
    bob_decision: np.ndarray
    eve_phase_decision: np.ndarray
    eve_bit_decision: np.ndarray

    def __len__(self) -> int:
        return int(self.slot.size)

    @classmethod
    def concatenate(cls, tables: list[SlotTable]) -> SlotTable:
        return cls(
            *(
                np.concatenate([getattr(t, name) for t in tables])
                for name in (
                    "slot",
                    "theta",
                    "bit",
                    "bob_sample",
                    "eve_sample",
                    "bob_decision",
                    "eve_phase_decision",
                    "eve_bit_decision",
                )
            )
        )

    def records(self) -> Iterator[SlotRecord]:
        for i in range(len(self)):
            yield SlotRecord(
                slot_index=int(self.slot[i]),
                true_phase=float(self.theta[i]),
                plaintext_bit=int(self.bit[i]),
                bob_sample=float(self.bob_sample[i]),
                eve_sample=complex(self.eve_sample[i]),
                bob_decision=int(self.bob_decision[i]),
                eve_phase_decision=int(self.eve_phase_decision[i]),
                eve_bit_decision=int(self.eve_bit_decision[i]),
            )

    def columns(self) -> dict[str, np.ndarray]:
        return {
            "slot": self.slot,
            "theta": self.theta,
            "bit": self.bit,
            "bob_sample": self.bob_sample,
            "eve_re": self.eve_sample.real,
            "eve_im": self.eve_sample.imag,
            "bob_decision": self.bob_decision,
            "eve_phase_decision": self.eve_phase_decision,
            "eve_bit_decision": self.eve_bit_decision,
        }

    def write(self, path: str | Path) -> Path:
        """Write the trace as ``.npz`` or CSV depending on the suffix."""
        path = Path(path)
        columns = self.columns()
        if path.suffix == ".npz":
            np.savez(path, **columns)
            return path
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(TRACE_COLUMNS)
            for row in zip(*(columns[name] for name in TRACE_COLUMNS)):
                writer.writerow(
                    [
                        int(row[0]),
                        repr(float(row[1])),
                        int(row[2]),
                        repr(float(row[3])),
                        repr(float(row[4])),
                        repr(float(row[5])),
                        int(row[6]),
                        int(row[7]),
                        int(row[8]),
                    ]
                )
        return path


# ---------------------------------------------------------------------------
# Alice, Bob, Eve
# ---------------------------------------------------------------------------


def make_plaintext(config: TrialConfig) -> np.ndarray:
    if config.plaintext_source == "provided":
        return np.asarray(config.plaintext, dtype=np.uint8)
    if config.plaintext_source == "fixed":
        return np.full(config.n_slots, config.fixed_bit, dtype=np.uint8)
    rng = np.random.default_rng(config.seed_sequence(_PLAINTEXT))
    return rng.integers(0, 2, size=config.n_slots, dtype=np.uint8)


def stream_generator(config: TrialConfig, index: int) -> KeystreamGenerator:
    """Generator of stream ``index`` (0 basis, 1 QNDM second key, 2 OSK); unset keys come from the seed."""
    key = (config.key, config.key2, config.osk_key)[index]
    if key is None:
        key = key_from_seed(config.seed_sequence(_KEYS, index), config.key_bits, config.generator)
    return KeystreamGenerator(key=key, key_bits=config.key_bits, kind=config.generator)


def running_keys_for(config: TrialConfig) -> RunningKeys:
    primary = stream_generator(config, 0)
    second = stream_generator(config, 1) if config.base == "qndm" else None
    osk_generator = None
    if config.osk and not config.osk_shared_seed:
        osk_generator = stream_generator(config, 2)
    return generate_keystream(
        primary,
        config.n_slots,
        config.M,
        second=second,
        osk=config.osk,
        osk_generator=osk_generator,
    )


def alice_encode(
    config: TrialConfig,
    keystream: RunningKeys,
    plaintext: np.ndarray,
    noise_source: np.random.Generator | None = None,
) -> np.ndarray:
    """Transmitted phases for one run or shard (DSR dither included when configured)."""
    plaintext = np.asarray(plaintext, dtype=np.int64)
    if plaintext.shape != keystream.k1.shape:
        raise InvalidParameterError("plaintext", plaintext.shape, f"expected {keystream.k1.shape}")
    constellation = config.constellation
    if isinstance(constellation, QndmConstellation):
        thetas = constellation.encode_phases(keystream.k1, keystream.k2, plaintext, keystream.osk)
    else:
        thetas = constellation.encode_phases(keystream.k1, plaintext, keystream.osk)
    if config.dsr is not None:
        if noise_source is None:
            raise InvalidParameterError("noise_source", None, "required to apply DSR")
        thetas = dither_phases(thetas, config.dsr, noise_source)
    return thetas


@dataclass(frozen=True, eq=False)
class BobResult:
    samples: np.ndarray
    decisions: np.ndarray
    errors: int | None = None


def bob_receive(
    thetas: np.ndarray,
    keystream: RunningKeys,
    constellation: Y00Constellation | QndmConstellation,
    noise_source: np.random.Generator | None = None,
    plaintext: np.ndarray | None = None,
    noiseless: bool = False,
) -> BobResult:
    """Rotate out the keyed basis angle, measure one quadrature, threshold at 0."""
    if isinstance(constellation, QndmConstellation):
        reference = constellation.reference_phases(keystream.k1, keystream.k2)
    else:
        reference = constellation.reference_phases(keystream.k1)
    samples = constellation.amplitude * np.cos(np.asarray(thetas) - reference)
    if not noiseless:
        if noise_source is None:
            raise InvalidParameterError("noise_source", None, "required unless noiseless")
        samples = samples + noise_source.normal(0.0, HOMODYNE.sigma, size=samples.shape)
    decisions = (samples < 0).astype(np.uint8)
    if keystream.osk is not None:
        decisions ^= keystream.osk.astype(np.uint8)
    errors = None
    if plaintext is not None:
        errors = int(np.count_nonzero(decisions != np.asarray(plaintext, dtype=np.uint8)))
    return BobResult(samples, decisions, errors)


def eve_receive(
    thetas: np.ndarray,
    amplitude: float,
    noise_source: np.random.Generator | None = None,
    noiseless: bool = False,
) -> np.ndarray:
    """Heterodyne samples ``|alpha| e^{i theta} + n`` with variance 1/2 per quadrature."""
    signal = amplitude * np.exp(1j * np.asarray(thetas))
    if noiseless:
        return signal
    if noise_source is None:
        raise InvalidParameterError("noise_source", None, "required unless noiseless")
    sigma = math.sqrt(HETERODYNE.quadrature_variance)
    noise = noise_source.normal(0.0, sigma, size=(2,) + signal.shape)
    return signal + noise[0] + 1j * noise[1]


def eve_decide(
    samples: np.ndarray,
    constellation: Y00Constellation | QndmConstellation,
    mode: str = "running_key",
) -> np.ndarray:
    """Nearest-phase decision (``running_key``) or its data-bit label (``data_binary``)."""
    if mode not in EVE_MODES:
        raise InvalidParameterError("mode", mode, f"must be one of {EVE_MODES}")
    nearest = constellation.nearest_point(np.angle(samples))
    if mode == "running_key":
        return nearest
    return np.asarray(constellation.bits, dtype=np.uint8)[nearest]


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MiEstimate:
    """Plug-in mutual information with its Miller-Madow corrected companion."""

    plugin_bits: float
    miller_madow_bits: float
    bias_bound: float
    n_samples: int
    recommended_samples: int

    @property
    def adequate(self) -> bool:
        return self.n_samples >= self.recommended_samples

    def to_dict(self) -> dict[str, Any]:
        return {
            "plugin_bits": self.plugin_bits,
            "miller_madow_bits": self.miller_madow_bits,
            "bias_bound": self.bias_bound,
            "n_samples": self.n_samples,
            "recommended_samples": self.recommended_samples,
            "adequate": self.adequate,
        }


def _mi_from_counts(counts: np.ndarray) -> MiEstimate:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return MiEstimate(0.0, 0.0, 0.0, 0, 10 * counts.shape[0] ** 2)
    joint = counts / total
    row = joint.sum(axis=1)
    col = joint.sum(axis=0)
    mask = joint > 0
    plugin = float(np.sum(joint[mask] * np.log2(joint[mask] / np.outer(row, col)[mask])))
    occupied_rows = int(np.count_nonzero(row))
    occupied_cols = int(np.count_nonzero(col))
    occupied = int(np.count_nonzero(mask))
    correction = ((occupied_rows - 1) + (occupied_cols - 1) - (occupied - 1)) / (2.0 * total * math.log(2))
    bias = (counts.shape[0] - 1) * (counts.shape[1] - 1) / (2.0 * total * math.log(2))
    return MiEstimate(
        plugin_bits=max(0.0, plugin),
        miller_madow_bits=max(0.0, plugin + correction),
        bias_bound=bias,
        n_samples=int(total),
        recommended_samples=10 * counts.shape[0] ** 2,
    )


def empirical_mi(true_keys: Any, decisions: Any, alphabet_size: int | None = None) -> MiEstimate:
    """Plug-in I(K; decision) in bits/slot over symbols ``1..alphabet_size``."""
    true_keys = np.asarray(true_keys, dtype=np.int64)
    decisions = np.asarray(decisions, dtype=np.int64)
    if true_keys.shape != decisions.shape:
        raise InvalidParameterError("decisions", decisions.shape, f"expected {true_keys.shape}")
    size = alphabet_size or int(max(true_keys.max(initial=1), decisions.max(initial=1)))
    counts = np.bincount((true_keys - 1) * size + (decisions - 1), minlength=size * size)
    return _mi_from_counts(counts.reshape(size, size))


def _rate(errors: int, trials: int) -> dict[str, Any]:
    interval = binomtest(errors, trials).proportion_ci(confidence_level=0.95, method="wilson")
    return {
        "errors": errors,
        "trials": trials,
        "rate": errors / trials,
        "ci_low": max(0.0, float(interval.low)),
        "ci_high": min(1.0, float(interval.high)),
    }


# ---------------------------------------------------------------------------
# Running a trial
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _ShardResult:
    bob_errors: int
    eve_symbol_errors: int
    eve_bit_errors: int
    confusion: np.ndarray
    table: SlotTable | None


def _run_shard(
    config: TrialConfig,
    shard: int,
    keys: RunningKeys,
    plaintext: np.ndarray,
    keep_trace: bool,
) -> _ShardResult:
    constellation = config.constellation
    rng = np.random.default_rng(config.seed_sequence(_NOISE, shard))
    start = shard * config.shard_size
    stop = min(start + config.shard_size, config.n_slots)
    keys = keys[start:stop]
    bits = plaintext[start:stop]

    thetas = alice_encode(config, keys, bits, rng)
    bob = bob_receive(thetas, keys, constellation, rng, bits, config.noiseless)
    samples = eve_receive(thetas, constellation.amplitude, rng, config.noiseless)
    points = eve_decide(samples, constellation, "running_key")
    symbols = constellation.running_key_labels[points]
    eve_bits = np.asarray(constellation.bits, dtype=np.uint8)[points]

    M = config.M
    confusion = np.bincount((keys.k1 - 1) * M + (symbols - 1), minlength=M * M).reshape(M, M)
    table = None
    if keep_trace:
        table = SlotTable(
            slot=np.arange(start, stop),
            theta=np.asarray(thetas),
            bit=bits.astype(np.uint8),
            bob_sample=bob.samples,
            eve_sample=samples,
            bob_decision=bob.decisions,
            eve_phase_decision=points,
            eve_bit_decision=eve_bits,
        )
    return _ShardResult(
        bob_errors=int(bob.errors),
        eve_symbol_errors=int(np.count_nonzero(symbols != keys.k1)),
        eve_bit_errors=int(np.count_nonzero(eve_bits != bits)),
        confusion=confusion,
        table=table,
    )


@dataclass(frozen=True)
class SimulationReport:
    config: dict[str, Any]
    bob: dict[str, Any]
    eve_symbol: dict[str, Any]
    eve_binary: dict[str, Any]
    mutual_information: dict[str, Any]
    analytic: dict[str, Any]
    masking: dict[str, Any] | None = None
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "config": self.config,
            "bob": self.bob,
            "eve_symbol": self.eve_symbol,
            "eve_binary": self.eve_binary,
            "mutual_information": self.mutual_information,
            "analytic": self.analytic,
            "masking": self.masking,
            "notes": list(self.notes),
        }


@dataclass(frozen=True, eq=False)
class TrialResult:
    report: SimulationReport
    keys: RunningKeys
    plaintext: np.ndarray
    table: SlotTable | None = None


def _analytic(config: TrialConfig) -> dict[str, Any]:
    mode = config.base
    analytic: dict[str, Any] = {
        "bob_error": bob_error(config.amplitude),
        "eve_mary_error": None,
        "eve_neighbour_error": None,
        "c1_uniform_channel": None,
    }
    if config.M >= 2:
        analytic["eve_mary_error"] = eve_error_mary(config.M, config.amplitude, mode)
        analytic["eve_neighbour_error"] = eve_neighbour_error(config.M, config.amplitude, mode)
        epsilon = uniform_epsilon(config.M, config.amplitude, mode)
        analytic["c1_uniform_channel"] = capacity_uniform(UniformChannelSpec(config.M, epsilon))
    return analytic


def run_trial(
    config: TrialConfig,
    workers: int | None = None,
    keep_trace: bool = False,
    lam: float = DEFAULT_LAMBDA,
) -> TrialResult:
    """Run a full trial; identical configs give identical results for any ``workers``."""
    keys = running_keys_for(config)
    plaintext = make_plaintext(config)
    shards = range(config.n_shards)
    if workers == 1 or config.n_shards == 1:
        results = [_run_shard(config, s, keys, plaintext, keep_trace) for s in shards]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _run_shard(config, s, keys, plaintext, keep_trace), shards))

    n = config.n_slots
    confusion = np.zeros((config.M, config.M), dtype=np.int64)
    for result in results:
        confusion += result.confusion
    bob_errors = sum(r.bob_errors for r in results)
    eve_symbol_errors = sum(r.eve_symbol_errors for r in results)
    eve_bit_errors = sum(r.eve_bit_errors for r in results)

    analytic = _analytic(config)
    mi = _mi_from_counts(confusion)
    notes = []
    if not mi.adequate:
        notes.append(
            f"plug-in MI uses {mi.n_samples} samples, below the recommended {mi.recommended_samples}"
        )
    if config.noiseless:
        notes.append("noiseless run: receiver noise disabled")

    masking = None
    if config.base == "qndm":
        masking = masking_metrics(config.constellation, HETERODYNE.sigma, lam).to_dict()

    report = SimulationReport(
        config=config.to_dict(),
        bob=_rate(bob_errors, n) | {"analytic": analytic["bob_error"]},
        eve_symbol=_rate(eve_symbol_errors, n)
        | {
            "analytic": analytic["eve_mary_error"],
            "analytic_neighbour": analytic["eve_neighbour_error"],
        },
        eve_binary=_rate(eve_bit_errors, n),
        mutual_information=mi.to_dict() | {"analytic_c1": analytic["c1_uniform_channel"]},
        analytic=analytic,
        masking=masking,
        notes=tuple(notes),
    )
    table = SlotTable.concatenate([r.table for r in results]) if keep_trace else None
    return TrialResult(report=report, keys=keys, plaintext=plaintext, table=table)
