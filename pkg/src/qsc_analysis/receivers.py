"""
Semiclassical Gaussian receivers and the closed-form error/capacity formulas.

Bob measures one quadrature after undoing the keyed rotation (homodyne,
variance 1/4). Eve has no key and measures both quadratures (heterodyne,
total variance 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import entr
from scipy.stats import norm

from .errors import InvalidParameterError

__all__ = [
    "ReceiverModel",
    "HOMODYNE",
    "HETERODYNE",
    "UniformChannelSpec",
    "SPACING_MODES",
    "tail_q",
    "bob_error",
    "neighbour_spacing",
    "signal_distance",
    "eve_error_mary",
    "eve_neighbour_error",
    "uniform_epsilon",
    "capacity_uniform",
    "dsr_range",
    "dsr_capacity",
]

_RECEIVER_VARIANCE = {"homodyne": 0.25, "heterodyne": 1.0}
SPACING_MODES = ("y00", "qndm")


@dataclass(frozen=True)
class ReceiverModel:
    kind: str
    sigma_sq: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        if self.kind not in _RECEIVER_VARIANCE:
            raise InvalidParameterError("kind", self.kind, "must be 'homodyne' or 'heterodyne'")
        expected = _RECEIVER_VARIANCE[self.kind]
        if math.isnan(self.sigma_sq):
            object.__setattr__(self, "sigma_sq", expected)
        elif self.sigma_sq != expected:
            raise InvalidParameterError(
                "sigma_sq", self.sigma_sq, f"{self.kind} noise variance is {expected}"
            )

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)

    @property
    def quadrature_variance(self) -> float:
        """Variance of each measured quadrature."""
        return self.sigma_sq if self.kind == "homodyne" else self.sigma_sq / 2.0


HOMODYNE = ReceiverModel("homodyne")
HETERODYNE = ReceiverModel("heterodyne")


@dataclass(frozen=True)
class UniformChannelSpec:
    """M-ary channel with probability ``epsilon`` on every wrong symbol."""

    M: int
    epsilon: float

    def __post_init__(self) -> None:
        if isinstance(self.M, bool) or int(self.M) != self.M or self.M < 1:
            raise InvalidParameterError("M", self.M, "must be a positive integer")
        if not self.epsilon >= 0:
            raise InvalidParameterError("epsilon", self.epsilon, "must be >= 0")
        if (self.M - 1) * self.epsilon > 1.0 + 1e-12:
            raise InvalidParameterError("epsilon", self.epsilon, "(M-1)*epsilon must not exceed 1")

    @property
    def correct_probability(self) -> float:
        return max(0.0, 1.0 - (self.M - 1) * self.epsilon)


def tail_q(y: Any) -> Any:
    """Gaussian tail ``Q(y) = P(Z > y)`` for a standard normal ``Z``."""
    value = norm.sf(y)
    if np.ndim(value) == 0:
        return float(value)
    return value


def bob_error(amplitude: float, receiver: ReceiverModel = HOMODYNE) -> float:
    """Keyed binary decision error ``Q(|alpha| / sigma_ho) = Q(2|alpha|)``."""
    if not amplitude > 0:
        raise InvalidParameterError("amplitude", amplitude, "must be positive")
    return tail_q(amplitude / receiver.sigma)


def neighbour_spacing(M: int, spacing_mode: str) -> float:
    if spacing_mode == "y00":
        return math.pi / M
    if spacing_mode == "qndm":
        return 2.0 * math.pi / M**2
    raise InvalidParameterError("spacing_mode", spacing_mode, "must be 'y00' or 'qndm'")


def signal_distance(M: int, amplitude: float, spacing_mode: str) -> float:
    """Euclidean distance between neighbouring signals, ``sqrt(2)|alpha| sqrt(1 - cos(delta))``."""
    delta = neighbour_spacing(M, spacing_mode)
    return math.sqrt(2.0) * amplitude * math.sqrt(1.0 - math.cos(delta))


def _check_mary(M: int, amplitude: float, sigma_sq: float) -> None:
    if isinstance(M, bool) or int(M) != M or M < 2:
        raise InvalidParameterError("M", M, "must be an integer >= 2")
    if not amplitude > 0:
        raise InvalidParameterError("amplitude", amplitude, "must be positive")
    if not sigma_sq > 0:
        raise InvalidParameterError("sigma_sq", sigma_sq, "must be positive")


def _crossing(M: int, amplitude: float, spacing_mode: str, sigma_sq: float) -> float:
    """``Q(Delta / 2 sigma)``: noise carries a sample across one decision boundary."""
    _check_mary(M, amplitude, sigma_sq)
    distance = signal_distance(M, amplitude, spacing_mode)
    return tail_q(distance / (2.0 * math.sqrt(sigma_sq)))


def eve_neighbour_error(
    M: int,
    amplitude: float,
    spacing_mode: str = "y00",
    sigma_sq: float = HETERODYNE.quadrature_variance,
) -> float:
    """Probability that a nearest-phase decision lands on either neighbour.

    This is the symbol error the simulated heterodyne receiver reproduces,
    ``2 Q(Delta / 2 sigma)`` clipped to ``1 - 1/M``.

    Args:
        M: Number of running-key values (bases).
        amplitude: Coherent amplitude ``|alpha|``.
        spacing_mode: ``y00`` (neighbours ``pi/M`` apart) or ``qndm`` (``2 pi/M^2``).
        sigma_sq: Noise variance along the line joining two neighbours; for a
            heterodyne receiver this is the per-quadrature variance 1/2.

    Returns:
        Symbol error probability in ``[0, 1 - 1/M]``.
    """
    value = 2.0 * _crossing(M, amplitude, spacing_mode, sigma_sq)
    return float(np.clip(value, 0.0, 1.0 - 1.0 / M))


def eve_error_mary(
    M: int,
    amplitude: float,
    spacing_mode: str = "y00",
    sigma_sq: float = HETERODYNE.quadrature_variance,
) -> float:
    """Eve's M-ary error ``2 (M-1)/M Q(Delta / 2 sigma)``, clipped to ``1 - 1/M``.

    The same boundary-crossing probability as :func:`eve_neighbour_error`,
    weighted by ``(M-1)/M``; below the clip the two differ by exactly that
    factor. The one-sided form ``(M-1)/M (1 - P_d)`` is smaller by a factor 2
    in the tail.

    Args:
        M: Number of running-key values (bases).
        amplitude: Coherent amplitude ``|alpha|``.
        spacing_mode: ``y00`` or ``qndm`` neighbour spacing.
        sigma_sq: Noise variance along the line joining two neighbours
            (heterodyne: 1/2 per quadrature).

    Returns:
        Error probability in ``[0, 1 - 1/M]``.
    """
    value = 2.0 * (M - 1) / M * _crossing(M, amplitude, spacing_mode, sigma_sq)
    return float(np.clip(value, 0.0, 1.0 - 1.0 / M))


def uniform_epsilon(
    M: int,
    amplitude: float,
    spacing_mode: str = "qndm",
    sigma_sq: float = HETERODYNE.quadrature_variance,
) -> float:
    """Per-wrong-symbol probability ``2 Q(Delta / 2 sigma) / M``, capped at ``1/M``."""
    return min(2.0 * _crossing(M, amplitude, spacing_mode, sigma_sq) / M, 1.0 / M)


def capacity_uniform(spec: UniformChannelSpec) -> float:
    """Capacity of the uniform-error M-ary channel in bits (``0 log 0 = 0``)."""
    wrong = spec.M - 1
    conditional = (entr(spec.correct_probability) + wrong * entr(spec.epsilon)) / math.log(2.0)
    return max(0.0, math.log2(spec.M) - float(conditional))


def dsr_range(amplitude: float, sigma_he: float = HETERODYNE.sigma) -> tuple[float, float]:
    """Allowed ``|R_p|`` interval for the wedge approximation."""
    return 1.0 / sigma_he, math.pi * amplitude / (2.0 * sigma_he)


def dsr_capacity(amplitude: float, r_p: float, sigma_he: float = HETERODYNE.sigma) -> float:
    """Wedge-approximation capacity ``log2(pi |alpha| / (2 |R_p|))``, clamped at 0."""
    if not amplitude > 0:
        raise InvalidParameterError("amplitude", amplitude, "must be positive")
    low, high = dsr_range(amplitude, sigma_he)
    if not low <= r_p <= high * (1.0 + 1e-12):
        raise InvalidParameterError(
            "r_p", r_p, f"need 1 <= sigma_he*|R_p| <= pi*|alpha|/2, i.e. {low:.6g} <= |R_p| <= {high:.6g}"
        )
    return max(0.0, math.log2(math.pi * amplitude / (2.0 * r_p)))
