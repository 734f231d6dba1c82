"""
Phase-signal constellations for Y-00 and its QNDM / DSR generalisations.

A constellation is an immutable set of coherent-state phases together with the
labels (running keys and Y-00 plaintext bit) that the keyed mapping attaches to
each phase. Points are stored in angular order, so point ``p`` sits at
``p * fine_spacing`` for both schemes.

Bit placement: the Y-00 plaintext bit ``b' = bit XOR osk_bit`` for basis key ``j``
is sent at ``theta_j + pi * (b' XOR parity(j))``. Antipodal points therefore carry
opposite bits; neighbouring points alternate except at the two seams that an even
``M`` forces (between indices ``M-1``/``M`` and ``2M-1``/``0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import InvalidParameterError

__all__ = [
    "PhasePoint",
    "OskConfig",
    "DsrConfig",
    "MaskingReport",
    "Y00Constellation",
    "QndmConstellation",
    "build_y00",
    "build_qndm",
    "build_constellation",
    "encode_phase",
    "encode_qndm_phase",
    "apply_dsr",
    "dither_phases",
    "masking_metrics",
    "canonical_angle",
]

TWO_PI = 2.0 * math.pi
SCHEMA = "qsc-constellation/1"

# Default masking factor Lambda; values from 5 to 10 are typical.
DEFAULT_LAMBDA = 5.0


def canonical_angle(theta: Any) -> Any:
    """Map angles into the half-open range [0, 2*pi)."""
    wrapped = np.mod(theta, TWO_PI)
    # np.mod can round a tiny negative angle up to exactly 2*pi.
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _require_positive_int(name: str, value: Any, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise InvalidParameterError(name, value, "must be an integer")
    if value < minimum:
        raise InvalidParameterError(name, value, f"must be >= {minimum}")
    return int(value)


def _require_amplitude(value: Any) -> float:
    try:
        amplitude = float(value)
    except (TypeError, ValueError):
        raise InvalidParameterError("amplitude", value, "must be a real number")
    if not math.isfinite(amplitude) or amplitude <= 0:
        raise InvalidParameterError("amplitude", value, "must be a positive finite real")
    return amplitude


def _require_bit(name: str, value: Any) -> int:
    if value not in (0, 1):
        raise InvalidParameterError(name, value, "must be 0 or 1")
    return int(value)


def _check_osk(osk_bit: int | None, osk: OskConfig | None) -> int:
    if osk is not None:
        if osk.enabled and osk_bit is None:
            raise InvalidParameterError("osk_bit", osk_bit, "required when OSK is enabled")
        if not osk.enabled and osk_bit is not None:
            raise InvalidParameterError("osk_bit", osk_bit, "must be absent when OSK is disabled")
    return 0 if osk_bit is None else _require_bit("osk_bit", osk_bit)


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PhasePoint:
    """A coherent state ``|amplitude * exp(i theta)>`` on the phase circle."""

    theta: float
    amplitude: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.theta):
            raise InvalidParameterError("theta", self.theta, "must be finite")
        object.__setattr__(self, "amplitude", _require_amplitude(self.amplitude))
        object.__setattr__(self, "theta", canonical_angle(float(self.theta)))

    @property
    def complex_amplitude(self) -> complex:
        return complex(self.amplitude * np.exp(1j * self.theta))


@dataclass(frozen=True)
class OskConfig:
    """Overlap selection keying: XOR of the data bit with a keyed bit.

    ``shared_seed`` selects whether the OSK bits come from the basis-selection
    PRNG stream or from an independently keyed generator.
    """

    enabled: bool = False
    shared_seed: bool = False


@dataclass(frozen=True)
class DsrConfig:
    """Deliberate signal randomisation: a keyless uniform phase dither.

    ``strength`` is |R_p| in arc-length units; the dither half-width in radians
    is ``strength / amplitude``.
    """

    strength: float
    amplitude: float
    density: str = "uniform"
    sigma_he: float = 1.0

    def __post_init__(self) -> None:
        _require_amplitude(self.amplitude)
        if self.density != "uniform":
            raise InvalidParameterError("density", self.density, "only 'uniform' is supported")
        if not math.isfinite(self.strength) or self.strength < 0:
            raise InvalidParameterError("strength", self.strength, "must be a non-negative real")
        ceiling = math.pi * self.amplitude / 2.0
        if self.sigma_he * self.strength > ceiling * (1.0 + 1e-12):
            raise InvalidParameterError(
                "strength",
                self.strength,
                f"sigma_he*|R_p| must not exceed pi*|alpha|/2 = {ceiling:.6g}",
            )

    @property
    def half_width(self) -> float:
        return self.strength / self.amplitude

    @property
    def in_wedge_range(self) -> bool:
        """True when 1 <= sigma_he*|R_p| <= pi*|alpha|/2 (validity of the wedge formula)."""
        scaled = self.sigma_he * self.strength
        return 1.0 <= scaled <= math.pi * self.amplitude / 2.0 * (1.0 + 1e-12)


@dataclass(frozen=True)
class MaskingReport:
    gamma_q: float
    masked_points: int
    masked_blocks: int
    condition_met: bool
    lam: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "gamma_q": self.gamma_q,
            "masked_points": self.masked_points,
            "masked_blocks": self.masked_blocks,
            "condition_met": self.condition_met,
            "lambda": self.lam,
        }


# ---------------------------------------------------------------------------
# Constellations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _PhaseConstellation:
    M: int
    amplitude: float
    points: tuple[PhasePoint, ...]
    bits: np.ndarray = field(repr=False)

    kind = "base"

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def thetas(self) -> np.ndarray:
        return np.array([p.theta for p in self.points])

    @property
    def basis_spacing(self) -> float:
        return math.pi / self.M

    @property
    def fine_spacing(self) -> float:
        raise NotImplementedError

    @property
    def points_per_block(self) -> int:
        raise NotImplementedError

    @property
    def running_key_labels(self) -> np.ndarray:
        """The per-point symbol Eve is after in a key-analysis attack."""
        raise NotImplementedError

    def complex_points(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.thetas)

    def nearest_point(self, thetas: Any) -> np.ndarray:
        """Index of the nearest constellation phase (ML under isotropic Gaussian noise)."""
        steps = np.rint(canonical_angle(np.asarray(thetas, dtype=float)) / self.fine_spacing)
        return steps.astype(np.int64) % self.n_points

    def adjacent_overlap(self) -> float:
        """|<alpha_m|alpha_{m+1}>|^2 between angular neighbours."""
        return math.exp(-2.0 * self.amplitude**2 * (1.0 - math.cos(self.fine_spacing)))

    def _point_dicts(self) -> list[dict[str, Any]]:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "schema": SCHEMA,
            "kind": self.kind,
            "M": self.M,
            "amplitude": self.amplitude,
        }
        if self.kind == "qndm":
            doc["delta"] = self.fine_spacing
        doc["points"] = self._point_dicts()
        return doc


@dataclass(frozen=True, eq=False)
class Y00Constellation(_PhaseConstellation):
    """2M-PSK Y-00 constellation; point ``p`` is at ``p*pi/M``."""

    keys: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    bit_parity_rule: str = "key_parity"

    kind = "y00"

    @property
    def fine_spacing(self) -> float:
        return math.pi / self.M

    @property
    def points_per_block(self) -> int:
        return 1

    @property
    def running_key_labels(self) -> np.ndarray:
        return self.keys

    def _check_key(self, key: Any) -> int:
        key = _require_positive_int("key", key, 1)
        if key > self.M:
            raise InvalidParameterError("key", key, f"must be in 1..{self.M}")
        return key

    def reference_phase(self, key: int) -> float:
        """Phase carrying ``b' = 0`` in basis ``key``; the angle a keyed receiver rotates out."""
        key = self._check_key(key)
        return canonical_angle(math.pi * (key - 1) / self.M + math.pi * (key % 2))

    def encode_phase(
        self, key: int, bit: int, osk_bit: int | None = None, osk: OskConfig | None = None
    ) -> PhasePoint:
        b_prime = _require_bit("bit", bit) ^ _check_osk(osk_bit, osk)
        key = self._check_key(key)
        theta = math.pi * (key - 1) / self.M + math.pi * (b_prime ^ (key % 2))
        return PhasePoint(theta, self.amplitude)

    def decode_phase(self, theta: float, key: int, osk_bit: int | None = None) -> int:
        """Keyed binary decision: 1 when ``theta`` sits closer to the pi-rotated reference."""
        offset = canonical_angle(theta - self.reference_phase(key))
        b_prime = int(abs(offset - math.pi) < math.pi / 2)
        return b_prime ^ (0 if osk_bit is None else osk_bit)

    def reference_phases(self, keys: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`reference_phase` over an array of running keys."""
        keys = np.asarray(keys, dtype=np.int64)
        return canonical_angle(math.pi * (keys - 1) / self.M + math.pi * (keys % 2))

    def encode_phases(
        self, keys: np.ndarray, bits: np.ndarray, osk_bits: np.ndarray | None = None
    ) -> np.ndarray:
        b_prime = np.asarray(bits, dtype=np.int64)
        if osk_bits is not None:
            b_prime = b_prime ^ np.asarray(osk_bits, dtype=np.int64)
        return canonical_angle(self.reference_phases(keys) + math.pi * b_prime)

    def _point_dicts(self) -> list[dict[str, Any]]:
        return [
            {"theta": p.theta, "k1": int(k), "bit": int(b)}
            for p, k, b in zip(self.points, self.keys, self.bits)
        ]


@dataclass(frozen=True, eq=False)
class QndmConstellation(_PhaseConstellation):
    """Quantum noise diffusion mapping: 2M blocks of M fine phases (2M^2 points)."""

    delta: float = 0.0
    k1: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    k2: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)
    blocks: tuple[tuple[int, ...], ...] = ()

    kind = "qndm"

    @property
    def fine_spacing(self) -> float:
        return self.delta

    @property
    def points_per_block(self) -> int:
        return self.M

    @property
    def running_key_labels(self) -> np.ndarray:
        return self.k1

    def _check_keys(self, k1: Any, k2: Any) -> tuple[int, int]:
        k1 = _require_positive_int("k1", k1, 1)
        k2 = _require_positive_int("k2", k2, 1)
        if k1 > self.M:
            raise InvalidParameterError("k1", k1, f"must be in 1..{self.M}")
        if k2 > self.M:
            raise InvalidParameterError("k2", k2, f"must be in 1..{self.M}")
        return k1, k2

    def basis_of(self, k1: Any, k2: Any) -> Any:
        """Upper-half block index l' (1..M) holding the pair (k1, k2)."""
        return (np.asarray(k2) - np.asarray(k1)) % self.M + 1

    def block_of(self, theta: float) -> int:
        """Block index l (1..2M); block l covers [(l-1)*pi/M, l*pi/M)."""
        position = canonical_angle(theta) / self.basis_spacing
        return int(math.floor(position + 1e-9)) % (2 * self.M) + 1

    def pattern(self, k: int) -> tuple[tuple[int, float], ...]:
        """Mapping pattern L_k: (K^{R2} label, phase) for each basis position 1..M."""
        k = _require_positive_int("k", k, 1)
        if k > self.M:
            raise InvalidParameterError("k", k, f"must be in 1..{self.M}")
        return tuple(
            (
                (j - 1 + k - 1) % self.M + 1,
                canonical_angle((j - 1) * self.basis_spacing + (k - 1) * self.delta),
            )
            for j in range(1, self.M + 1)
        )

    def block_labels(self, block: int) -> tuple[tuple[int, int], ...]:
        """(K^{R1}, K^{R2}) pairs of block ``block`` in angular order."""
        indices = self.blocks[block - 1]
        return tuple((int(self.k1[i]), int(self.k2[i])) for i in indices)

    def reference_phase(self, k1: int, k2: int) -> float:
        k1, k2 = self._check_keys(k1, k2)
        return float(self.reference_phases(np.array([k1]), np.array([k2]))[0])

    def encode_phase(
        self,
        k1: int,
        k2: int,
        bit: int,
        osk_bit: int | None = None,
        osk: OskConfig | None = None,
    ) -> PhasePoint:
        b_prime = _require_bit("bit", bit) ^ _check_osk(osk_bit, osk)
        k1, k2 = self._check_keys(k1, k2)
        theta = self.encode_phases(np.array([k1]), np.array([k2]), np.array([b_prime]))[0]
        return PhasePoint(float(theta), self.amplitude)

    def decode_phase(self, theta: float, k1: int, k2: int, osk_bit: int | None = None) -> int:
        offset = canonical_angle(theta - self.reference_phase(k1, k2))
        b_prime = int(abs(offset - math.pi) < math.pi / 2)
        return b_prime ^ (0 if osk_bit is None else osk_bit)

    def reference_phases(self, k1: np.ndarray, k2: np.ndarray) -> np.ndarray:
        k1 = np.asarray(k1, dtype=np.int64)
        basis = self.basis_of(k1, k2)
        theta = (basis - 1) * self.basis_spacing + (k1 - 1) * self.delta + math.pi * (basis % 2)
        return canonical_angle(theta)

    def encode_phases(
        self,
        k1: np.ndarray,
        k2: np.ndarray,
        bits: np.ndarray,
        osk_bits: np.ndarray | None = None,
    ) -> np.ndarray:
        b_prime = np.asarray(bits, dtype=np.int64)
        if osk_bits is not None:
            b_prime = b_prime ^ np.asarray(osk_bits, dtype=np.int64)
        return canonical_angle(self.reference_phases(k1, k2) + math.pi * b_prime)

    def _point_dicts(self) -> list[dict[str, Any]]:
        return [
            {"theta": p.theta, "k1": int(a), "k2": int(b), "bit": int(x)}
            for p, a, b, x in zip(self.points, self.k1, self.k2, self.bits)
        ]


# ---------------------------------------------------------------------------
# Builders and operations
# ---------------------------------------------------------------------------


def build_y00(M: int, amplitude: float) -> Y00Constellation:
    """Build the 2M-point Y-00 constellation with theta_1 = 0."""
    M = _require_positive_int("M", M, 1)
    amplitude = _require_amplitude(amplitude)
    index = np.arange(2 * M)
    keys = index % M + 1
    # b' XOR parity(j) is 0 on the upper half and 1 on the lower half.
    bits = (index >= M).astype(np.int64) ^ (keys % 2)
    points = tuple(PhasePoint(math.pi * p / M, amplitude) for p in index)
    return Y00Constellation(M=M, amplitude=amplitude, points=points, bits=bits, keys=keys)


def build_qndm(M: int, amplitude: float) -> QndmConstellation:
    """Build the QNDM constellation: block l holds theta_l + k*delta, k = 0..M-1."""
    M = _require_positive_int("M", M, 2)
    amplitude = _require_amplitude(amplitude)
    delta = (math.pi / M) / M
    index = np.arange(2 * M * M)
    block = index // M  # 0-based l - 1
    fine = index % M
    basis = block % M + 1
    k1 = fine + 1
    k2 = (fine + basis - 1) % M + 1
    bits = (block >= M).astype(np.int64) ^ (basis % 2)
    points = tuple(PhasePoint(delta * p, amplitude) for p in index)
    blocks = tuple(tuple(range(b * M, (b + 1) * M)) for b in range(2 * M))
    return QndmConstellation(
        M=M,
        amplitude=amplitude,
        points=points,
        bits=bits,
        delta=delta,
        k1=k1,
        k2=k2,
        blocks=blocks,
    )


def build_constellation(kind: str, M: int, amplitude: float) -> Y00Constellation | QndmConstellation:
    """Build the constellation of one base scheme.

    Args:
        kind: ``y00`` or ``qndm``.
        M: Number of bases; QNDM needs at least 2.
        amplitude: Coherent amplitude ``|alpha|``.

    Returns:
        The constellation with its per-point labels.

    Raises:
        InvalidParameterError: Unknown kind or invalid M or amplitude.
    """
    if kind == "y00":
        return build_y00(M, amplitude)
    if kind == "qndm":
        return build_qndm(M, amplitude)
    raise InvalidParameterError("kind", kind, "must be 'y00' or 'qndm'")


def encode_phase(
    constellation: Y00Constellation,
    key_j: int,
    bit: int,
    osk_bit: int | None = None,
    osk: OskConfig | None = None,
) -> PhasePoint:
    """Transmitted Y-00 phase for one slot.

    Args:
        constellation: The Y-00 constellation.
        key_j: Running key of the slot (1..M).
        bit: Plaintext bit.
        osk_bit: OSK mask bit; the sent bit is ``bit ^ osk_bit``.
        osk: OSK configuration, if any; enabled OSK requires ``osk_bit``.

    Returns:
        The coherent-state phase point.
    """
    return constellation.encode_phase(key_j, bit, osk_bit=osk_bit, osk=osk)


def encode_qndm_phase(
    constellation: QndmConstellation,
    k1: int,
    k2: int,
    bit: int,
    osk_bit: int | None = None,
    osk: OskConfig | None = None,
) -> PhasePoint:
    """QNDM counterpart of :func:`encode_phase`: ``(k1, k2)`` select the block and fine offset."""
    return constellation.encode_phase(k1, k2, bit, osk_bit=osk_bit, osk=osk)


def apply_dsr(theta: PhasePoint, config: DsrConfig, noise_source: np.random.Generator) -> PhasePoint:
    """Draw theta_r uniformly within +-|R_p| of arc length around ``theta``.

    Args:
        theta: Phase point before randomisation.
        config: DSR strength and density.
        noise_source: Generator the dither is drawn from.

    Returns:
        The dithered point at the same amplitude.
    """
    half = config.strength / theta.amplitude
    return PhasePoint(theta.theta + noise_source.uniform(-half, half), theta.amplitude)


def dither_phases(
    thetas: np.ndarray, config: DsrConfig, noise_source: np.random.Generator
) -> np.ndarray:
    """Vectorised :func:`apply_dsr`; the result is wrapped into ``[0, 2 pi)``."""
    half = config.half_width
    return canonical_angle(thetas + noise_source.uniform(-half, half, size=np.shape(thetas)))


def masking_metrics(
    constellation: Y00Constellation | QndmConstellation,
    sigma: float,
    lam: float = DEFAULT_LAMBDA,
) -> MaskingReport:
    """How many fine phases one noise standard deviation of arc length covers.

    Args:
        constellation: Y-00 or QNDM constellation.
        sigma: Noise standard deviation in field units.
        lam: Required masked points per block for ``condition_met``.

    Returns:
        The ``MaskingReport`` with ``gamma_q`` and the masked point and block counts.
    """
    if not sigma > 0:
        raise InvalidParameterError("sigma", sigma, "must be positive")
    if not lam > 0:
        raise InvalidParameterError("lam", lam, "must be positive")
    gamma_q = constellation.M * sigma / (math.pi * constellation.amplitude)
    arc = constellation.amplitude * constellation.fine_spacing
    masked_points = int(math.floor(sigma / arc + 1e-12))
    per_block = constellation.points_per_block
    return MaskingReport(
        gamma_q=gamma_q,
        masked_points=masked_points,
        masked_blocks=masked_points // per_block,
        condition_met=masked_points >= lam * per_block,
        lam=lam,
    )
