"""
Desk-scale exhaustive key search, known-plaintext or ciphertext-only.

Eve holds her heterodyne samples and the plaintext. For every candidate LFSR key
she replays the running keys and keeps the key while each predicted phase is
consistent with the observed one:

* Y-00 predicts the full phase ``reference(k1) + pi*bit`` (period 2*pi);
  with OSK either branch is acceptable, so the phase is compared modulo pi.
* QNDM's second running key is unknown to a K_S1 search, so only the fine
  offset ``(k1-1)*delta`` is compared, modulo the basis spacing pi/M.

Without the plaintext (ciphertext-only) Y-00 compares the basis phase modulo pi,
which is what the known-plaintext search reduces to under OSK.

A key survives a slot when the arc length ``|alpha| * |wrapped difference|`` is
within ``radius * sigma_he + |R_p|`` (``hard``), or when its cumulative Gaussian
log-likelihood stays within ``margin`` nats of the best candidate (``soft``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, TextIO

import numpy as np

from .constellation import build_qndm, build_y00
from .errors import InvalidParameterError, KeyspaceTooLargeError
from .keystream import LfsrBank, chunk_bits
from .receivers import HETERODYNE
from .simulator import TrialConfig, parse_scheme, run_trial, stream_generator

__all__ = [
    "MAX_KEY_BITS",
    "KPA_MODES",
    "KPA_COLUMNS",
    "KPA_ATTACKS",
    "KpaCurve",
    "kpa_search",
    "run_kpa_experiment",
]

SCHEMA = "qsc-kpa-curve/1"

MAX_KEY_BITS = 20
KPA_MODES = ("hard", "soft")
KPA_COLUMNS = ("n", "survivors", "equivocation_bits")
KPA_ATTACKS = ("known-plaintext", "ciphertext-only")

DEFAULT_RADIUS = 3.0
DEFAULT_MARGIN = 4.5
EXACT_TOLERANCE = 1e-9

# spawn_key root of the plaintext permutation stream
_PERMUTATION = 3


@dataclass(frozen=True, eq=False)
class KpaCurve:
    """Surviving-key count after each prefix length ``n = 0..N``."""

    survivors: np.ndarray
    keyspace: int
    key_bits: int
    mode: str
    true_key_survived: bool | None = None
    attack: str = "known-plaintext"

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.survivors.size)

    @property
    def equivocation_bits(self) -> np.ndarray:
        return np.log2(np.maximum(self.survivors, 1).astype(float))

    @property
    def final_survivors(self) -> int:
        return int(self.survivors[-1])

    def unique_at(self) -> int | None:
        """First prefix length that leaves a single key."""
        hits = np.flatnonzero(self.survivors <= 1)
        return int(hits[0]) if hits.size else None

    def rows(self) -> list[tuple[int, int, float]]:
        return [
            (int(n), int(s), float(e))
            for n, s, e in zip(self.n, self.survivors, self.equivocation_bits)
        ]

    def dump_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream)
        writer.writerow(KPA_COLUMNS)
        for n, survivors, equivocation in self.rows():
            writer.writerow([n, survivors, repr(equivocation)])

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as f:
            self.dump_csv(f)
        return path

    def summary(self) -> dict[str, Any]:
        return {
            "keyspace": self.keyspace,
            "key_bits": self.key_bits,
            "mode": self.mode,
            "attack": self.attack,
            "slots": int(self.survivors.size - 1),
            "final_survivors": self.final_survivors,
            "final_equivocation_bits": float(self.equivocation_bits[-1]),
            "unique_at": self.unique_at(),
            "true_key_survived": self.true_key_survived,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            **self.summary(),
            "n": self.n.tolist(),
            "survivors": self.survivors.tolist(),
            "equivocation_bits": self.equivocation_bits.tolist(),
        }


def _wrap(difference: np.ndarray, period: float) -> np.ndarray:
    return np.mod(difference + period / 2.0, period) - period / 2.0


def kpa_search(
    samples: Any,
    plaintext: Any = None,
    *,
    M: int,
    amplitude: float,
    scheme: str = "y00",
    key_bits: int = 16,
    taps: tuple[int, ...] | None = None,
    mode: str = "hard",
    radius: float = DEFAULT_RADIUS,
    margin: float = DEFAULT_MARGIN,
    sigma_he: float = HETERODYNE.sigma,
    dsr_strength: float = 0.0,
    osk_shared_seed: bool = False,
    noiseless: bool = False,
    true_key: int | None = None,
    max_key_bits: int = MAX_KEY_BITS,
) -> KpaCurve:
    """Exhaustive search over every non-zero LFSR key of ``key_bits`` bits.

    Args:
        samples: Eve's heterodyne samples, one per slot.
        plaintext: Known plaintext bits; ``None`` runs a ciphertext-only search
            over every sample.
        M: Number of bases (a power of two).
        amplitude: Coherent amplitude ``|alpha|``.
        scheme: Scheme string of the attacked run.
        key_bits: LFSR length; every non-zero state is a candidate.
        mode: ``hard`` (arc-length window) or ``soft`` (likelihood margin).
        true_key: When given, the curve records whether it survived.

    Returns:
        The survivor curve over prefix lengths ``0..N``.

    Raises:
        KeyspaceTooLargeError: ``key_bits`` exceeds ``max_key_bits``.
    """
    if key_bits > max_key_bits:
        raise KeyspaceTooLargeError(key_bits, max_key_bits)
    if mode not in KPA_MODES:
        raise InvalidParameterError("mode", mode, f"must be one of {KPA_MODES}")
    if isinstance(M, bool) or int(M) != M or M < 1 or M & (M - 1):
        raise InvalidParameterError("M", M, "key search needs M to be a power of two")
    base, osk, _ = parse_scheme(scheme)
    samples = np.asarray(samples, dtype=complex).ravel()
    known = plaintext is not None
    if known:
        plaintext = np.asarray(plaintext, dtype=np.int64).ravel()
    else:
        plaintext = np.zeros(samples.size, dtype=np.int64)
    if samples.size < plaintext.size:
        raise InvalidParameterError(
            "samples", samples.size, f"need at least one sample per plaintext bit ({plaintext.size})"
        )

    bank = LfsrBank.all_keys(key_bits, taps)
    keyspace = len(bank)
    candidates = np.arange(1, keyspace + 1, dtype=np.int64)
    width = chunk_bits(M)

    if base == "qndm":
        constellation = build_qndm(M, amplitude)
        period = math.pi / M
    else:
        constellation = build_y00(M, amplitude)
        period = 2.0 * math.pi if known and not osk else math.pi

    if noiseless:
        tolerance = EXACT_TOLERANCE
        mode = "hard"
    else:
        tolerance = radius * sigma_he + dsr_strength
    variance = sigma_he**2 / 2.0 + dsr_strength**2 / 3.0
    loglik = np.zeros(keyspace)

    observed = np.angle(samples)
    survivors = [keyspace]
    for slot in range(plaintext.size):
        k1 = bank.chunk(width) + 1
        if osk and osk_shared_seed:
            bank.step()
        if base == "qndm":
            predicted = (k1 - 1) * constellation.fine_spacing
        else:
            predicted = constellation.reference_phases(k1) + math.pi * plaintext[slot]
        arc = amplitude * np.abs(_wrap(observed[slot] - predicted, period))

        if mode == "hard":
            keep = arc <= tolerance
        else:
            loglik -= arc**2 / (2.0 * variance)
            keep = loglik >= loglik.max(initial=-np.inf) - margin
        if not keep.all():
            bank.select(keep)
            candidates = candidates[keep]
            loglik = loglik[keep]
        survivors.append(len(bank))

    survived = None if true_key is None else bool(np.any(candidates == true_key))
    return KpaCurve(
        survivors=np.asarray(survivors, dtype=np.int64),
        keyspace=keyspace,
        key_bits=key_bits,
        mode=mode,
        true_key_survived=survived,
        attack=KPA_ATTACKS[0] if known else KPA_ATTACKS[1],
    )


def run_kpa_experiment(
    config: TrialConfig,
    *,
    mode: str = "hard",
    radius: float = DEFAULT_RADIUS,
    permute_plaintext: bool = False,
    ciphertext_only: bool = False,
    workers: int | None = None,
    max_key_bits: int = MAX_KEY_BITS,
) -> KpaCurve:
    """Simulate a run, then attack its basis key with the (optionally permuted) plaintext.

    ``ciphertext_only`` withholds the plaintext from the search.
    """
    if ciphertext_only and permute_plaintext:
        raise InvalidParameterError(
            "permute_plaintext", True, "a ciphertext-only search uses no plaintext"
        )
    if config.generator != "lfsr":
        raise InvalidParameterError("generator", config.generator, "key search enumerates LFSR keys")
    if config.key_bits > max_key_bits:
        raise KeyspaceTooLargeError(config.key_bits, max_key_bits)
    result = run_trial(config, workers=workers, keep_trace=True)
    plaintext = result.plaintext
    if permute_plaintext:
        rng = np.random.default_rng(config.seed_sequence(_PERMUTATION))
        plaintext = rng.permutation(plaintext)
    if ciphertext_only:
        plaintext = None
    return kpa_search(
        result.table.eve_sample,
        plaintext,
        M=config.M,
        amplitude=config.amplitude,
        scheme=config.scheme,
        key_bits=config.key_bits,
        mode=mode,
        radius=radius,
        dsr_strength=config.dsr_strength,
        osk_shared_seed=config.osk_shared_seed,
        noiseless=config.noiseless,
        true_key=stream_generator(config, 0).key,
        max_key_bits=max_key_bits,
    )
