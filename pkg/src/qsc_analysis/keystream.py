"""
Running-key generators.

The secret key seeds a PRNG whose output is cut into per-slot records. For a
stream feeding the basis selection a record is ``[k bits][osk bit?]``; QNDM's
second running key and an independent OSK branch come from their own keyed
streams with the same record discipline. Chunks are read MSB first and offset
by one, so a ``log2 M``-bit chunk ``c`` is the running key ``c + 1``. When M is
not a power of two, whole records whose chunk is out of range are rejected.

Two PRNG kinds are available:

``lfsr``
    Maximal-length Fibonacci LFSR: output the low bit, shift right, feed the
    parity of ``state & mask`` into the top bit. The keyspace is exactly
    ``2^n - 1`` non-zero states, which keeps exhaustive search well defined.
``counter``
    Philox counter-based generator seeded with the key, for throughput runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "GENERATOR_KINDS",
    "MAXIMAL_TAPS",
    "KeystreamGenerator",
    "LfsrBank",
    "RunningKeys",
    "chunk_bits",
    "feedback_mask",
    "generate_keystream",
    "key_from_seed",
]

GENERATOR_KINDS = ("lfsr", "counter")

# Exponents of primitive trinomials/pentanomials (x^n + ... + 1), one per register length.
MAXIMAL_TAPS: dict[int, tuple[int, ...]] = {
    2: (2, 1), 3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5), 7: (7, 6),
    8: (8, 6, 5, 4), 9: (9, 5), 10: (10, 7), 11: (11, 9), 12: (12, 6, 4, 1),
    13: (13, 4, 3, 1), 14: (14, 5, 3, 1), 15: (15, 14), 16: (16, 15, 13, 4),
    17: (17, 14), 18: (18, 11), 19: (19, 6, 2, 1), 20: (20, 17), 21: (21, 19),
    22: (22, 21), 23: (23, 18), 24: (24, 23, 22, 17), 25: (25, 22),
    26: (26, 6, 2, 1), 27: (27, 5, 2, 1), 28: (28, 25), 29: (29, 27),
    30: (30, 6, 4, 1), 31: (31, 28), 32: (32, 22, 2, 1),
}  # fmt: skip

MAX_COUNTER_KEY_BITS = 256

# Warm-up length (in multiples of the register length) before the strided recurrence.
_STRIDE = 1024


def feedback_mask(key_bits: int, taps: tuple[int, ...] | None = None) -> int:
    """State mask whose parity is the next feedback bit."""
    taps = MAXIMAL_TAPS[key_bits] if taps is None else taps
    if taps[0] != key_bits or any(not 0 < t < key_bits for t in taps[1:]):
        raise InvalidParameterError(
            "taps", taps, f"must start with the register length {key_bits} and list lower exponents"
        )
    mask = 1
    for exponent in taps[1:]:
        mask |= 1 << exponent
    return mask


def chunk_bits(M: int) -> int:
    return max(0, math.ceil(math.log2(M)))


def key_from_seed(seed_sequence: np.random.SeedSequence, key_bits: int, kind: str = "lfsr") -> int:
    """Deterministically derive a valid key from a seed sequence."""
    words = seed_sequence.generate_state(max(1, math.ceil(key_bits / 32)), dtype=np.uint32)
    value = 0
    for word in words:
        value = (value << 32) | int(word)
    value &= (1 << key_bits) - 1
    if kind == "lfsr" and value == 0:
        value = 1
    return value


@dataclass(frozen=True)
class KeystreamGenerator:
    """A keyed bit stream; ``bits(n)`` is always the first ``n`` bits of the same stream."""

    key: int
    key_bits: int = 16
    kind: str = "lfsr"
    taps: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in GENERATOR_KINDS:
            raise InvalidParameterError("kind", self.kind, f"must be one of {GENERATOR_KINDS}")
        if self.kind == "lfsr":
            if self.taps is None and self.key_bits not in MAXIMAL_TAPS:
                raise InvalidParameterError(
                    "key_bits", self.key_bits, f"lfsr supports {min(MAXIMAL_TAPS)}..{max(MAXIMAL_TAPS)} bits"
                )
            feedback_mask(self.key_bits, self.taps)
            if not 1 <= self.key < (1 << self.key_bits):
                raise InvalidParameterError("key", self.key, f"lfsr key must be in 1..2^{self.key_bits}-1")
        else:
            if not 1 <= self.key_bits <= MAX_COUNTER_KEY_BITS:
                raise InvalidParameterError("key_bits", self.key_bits, f"must be in 1..{MAX_COUNTER_KEY_BITS}")
            if not 0 <= self.key < (1 << self.key_bits):
                raise InvalidParameterError("key", self.key, f"must fit in {self.key_bits} bits")

    @property
    def mask(self) -> int:
        return feedback_mask(self.key_bits, self.taps)

    @property
    def keyspace(self) -> int:
        return (1 << self.key_bits) - 1 if self.kind == "lfsr" else 1 << self.key_bits

    def bits(self, count: int) -> np.ndarray:
        if count <= 0:
            return np.zeros(0, dtype=np.uint8)
        if self.kind == "counter":
            return self._counter_bits(count)
        return self._lfsr_bits(count)

    def _counter_bits(self, count: int) -> np.ndarray:
        words = [int(self.key >> shift) & 0xFFFFFFFF for shift in range(0, max(self.key_bits, 1), 32)]
        generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
        raw = np.frombuffer(generator.bytes((count + 7) // 8), dtype=np.uint8)
        return np.unpackbits(raw)[:count]

    def _lfsr_bits(self, count: int) -> np.ndarray:
        n = self.key_bits
        mask = self.mask
        exponents = [k for k in range(n) if mask >> k & 1]
        out = np.empty(count, dtype=np.uint8)

        warmup = min(count, _STRIDE * n)
        state = self.key
        for t in range(warmup):
            out[t] = state & 1
            feedback = (state & mask).bit_count() & 1
            state = (state >> 1) | (feedback << (n - 1))

        # Squaring over GF(2) gives o[t + S*n] = XOR_k o[t + S*k] for S = 2^j.
        span = _STRIDE * n
        block = _STRIDE * (n - max(exponents))
        position = warmup
        while position < count:
            stop = min(position + block, count)
            base = position - span
            acc = np.zeros(stop - position, dtype=np.uint8)
            for k in exponents:
                offset = base + _STRIDE * k
                acc ^= out[offset : offset + (stop - position)]
            out[position:stop] = acc
            position = stop
        return out


class LfsrBank:
    """Many LFSRs with a common feedback mask, stepped in lockstep."""

    def __init__(self, key_bits: int, states: Any, taps: tuple[int, ...] | None = None):
        self.key_bits = key_bits
        self.mask = np.uint64(feedback_mask(key_bits, taps))
        self.states = np.asarray(states, dtype=np.uint64).copy()
        self._top = np.uint64(key_bits - 1)

    @classmethod
    def all_keys(cls, key_bits: int, taps: tuple[int, ...] | None = None) -> LfsrBank:
        return cls(key_bits, np.arange(1, 1 << key_bits, dtype=np.uint64), taps)

    def __len__(self) -> int:
        return int(self.states.size)

    def step(self) -> np.ndarray:
        """Advance every register once and return the output bits."""
        out = (self.states & np.uint64(1)).astype(np.uint8)
        folded = self.states & self.mask
        for shift in (32, 16, 8, 4, 2, 1):
            folded ^= folded >> np.uint64(shift)
        feedback = folded & np.uint64(1)
        self.states = (self.states >> np.uint64(1)) | (feedback << self._top)
        return out

    def chunk(self, width: int) -> np.ndarray:
        """Read ``width`` output bits MSB first as an integer per register."""
        value = np.zeros(self.states.size, dtype=np.int64)
        for _ in range(width):
            value = (value << 1) | self.step()
        return value

    def select(self, keep: np.ndarray) -> None:
        self.states = self.states[keep]


@dataclass(frozen=True, eq=False)
class RunningKeys:
    """Per-slot running keys: ``k1`` always, ``k2`` for QNDM, ``osk`` when OSK is on."""

    k1: np.ndarray
    k2: np.ndarray | None = None
    osk: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.k1.size)

    def __getitem__(self, index: slice) -> RunningKeys:
        return RunningKeys(
            self.k1[index],
            None if self.k2 is None else self.k2[index],
            None if self.osk is None else self.osk[index],
        )


def _read_records(generator: KeystreamGenerator, n_slots: int, M: int, extra_bit: bool):
    width = chunk_bits(M)
    record = width + int(extra_bit)
    if record == 0:
        return np.ones(n_slots, dtype=np.int64), None

    wanted = n_slots
    while True:
        bits = generator.bits(wanted * record).reshape(wanted, record).astype(np.int64)
        weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
        chunks = bits[:, :width] @ weights if width else np.zeros(wanted, dtype=np.int64)
        accepted = chunks < M
        if np.count_nonzero(accepted) >= n_slots:
            rows = np.flatnonzero(accepted)[:n_slots]
            keys = chunks[rows] + 1
            extra = bits[rows, width].astype(np.uint8) if extra_bit else None
            return keys, extra
        wanted = max(2 * wanted, n_slots + 64)


def generate_keystream(
    generator: KeystreamGenerator,
    n_slots: int,
    M: int,
    *,
    second: KeystreamGenerator | None = None,
    osk: bool = False,
    osk_generator: KeystreamGenerator | None = None,
) -> RunningKeys:
    """Cut the keyed streams into per-slot running keys.

    With ``osk`` and no ``osk_generator`` the OSK bit rides at the end of each
    basis record (shared seed); otherwise it is the single bit of each record of
    ``osk_generator``. ``second`` supplies QNDM's K^{R2}.
    """
    if isinstance(n_slots, bool) or int(n_slots) != n_slots or n_slots < 0:
        raise InvalidParameterError("n_slots", n_slots, "must be a non-negative integer")
    if isinstance(M, bool) or int(M) != M or M < 1:
        raise InvalidParameterError("M", M, "must be a positive integer")
    shared_osk = osk and osk_generator is None
    k1, osk_bits = _read_records(generator, n_slots, M, shared_osk)
    k2 = None
    if second is not None:
        k2, _ = _read_records(second, n_slots, M, False)
    if osk and not shared_osk:
        osk_bits = osk_generator.bits(n_slots).astype(np.uint8)
    return RunningKeys(k1, k2, osk_bits if osk else None)
