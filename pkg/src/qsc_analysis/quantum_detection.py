"""
Quantum detection in the finite span of coherent signal states.

Everything here works on an orthonormalised basis of span{|alpha_m>}, obtained
from the Hermitian eigendecomposition of the Gram matrix ``G = U diag(lam) U^H``.
Eigenvalues below :data:`RANK_TOL` are discarded; in the remaining ``r``
dimensions state ``m`` has coordinates ``sqrt(lam) * conj(U[m, :])`` and the
square-root measurement vectors are ``conj(U[l, :])``.

Probabilities, entropies and informations are returned in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.stats import entropy

from .constellation import QndmConstellation, Y00Constellation
from .errors import InvalidParameterError, NumericalConsistencyError

__all__ = [
    "RANK_TOL",
    "PureStateEnsemble",
    "SpanBasis",
    "SpanOperator",
    "Povm",
    "ChannelMatrix",
    "BayesResidual",
    "MinimaxResidual",
    "coherent_overlap",
    "gram_matrix",
    "span_basis",
    "density_operators",
    "srm_povm",
    "srm_channel",
    "channel_matrix",
    "srm_error_covariant",
    "helstrom_binary_pure",
    "helstrom_binary_mixed",
    "helstrom_povm",
    "verify_bayes_conditions",
    "verify_minimax_conditions",
    "verify_mi_condition",
    "von_neumann_entropy",
    "holevo_information",
    "holevo_covariant",
    "mutual_information",
    "psk_ensemble",
    "psk_overlaps",
    "block_ensemble",
    "data_mixtures",
]

RANK_TOL = 1e-12
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-10
COMPLETENESS_TOL = 1e-9
PRIOR_TOL = 1e-12


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PureStateEnsemble:
    """Coherent states ``|alpha_m>`` with priors ``xi_m``."""

    amplitudes: np.ndarray
    priors: np.ndarray

    def __post_init__(self) -> None:
        amplitudes = np.atleast_1d(np.asarray(self.amplitudes, dtype=complex))
        priors = np.atleast_1d(np.asarray(self.priors, dtype=float))
        if amplitudes.ndim != 1 or amplitudes.size == 0:
            raise InvalidParameterError("amplitudes", self.amplitudes, "must be a non-empty 1-D list")
        if priors.shape != amplitudes.shape:
            raise InvalidParameterError(
                "priors", self.priors, f"expected {amplitudes.size} priors, got {priors.size}"
            )
        if np.any(priors <= 0):
            raise InvalidParameterError("priors", self.priors, "every prior must be > 0")
        if abs(priors.sum() - 1.0) > PRIOR_TOL:
            raise InvalidParameterError("priors", self.priors, "priors must sum to 1")
        object.__setattr__(self, "amplitudes", amplitudes)
        object.__setattr__(self, "priors", priors)

    @classmethod
    def uniform(cls, amplitudes: Any) -> PureStateEnsemble:
        amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=complex))
        return cls(amplitudes, np.full(amplitudes.size, 1.0 / amplitudes.size))

    @property
    def size(self) -> int:
        return int(self.amplitudes.size)


@dataclass(frozen=True, eq=False)
class SpanBasis:
    """Orthonormal basis of the span of an ensemble.

    ``states[:, m]`` are the coordinates of ``|alpha_m>``; ``eigenvectors`` are the
    kept columns of ``U``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    states: np.ndarray
    discarded: float

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def dimension(self) -> int:
        return int(self.eigenvectors.shape[0])


@dataclass(frozen=True, eq=False)
class SpanOperator:
    """An operator on the span, as an ``r x r`` matrix in the orthonormal basis."""

    matrix: np.ndarray
    basis_transform: np.ndarray | None = None

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidParameterError("matrix", matrix.shape, "must be square")
        object.__setattr__(self, "matrix", matrix)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def is_hermitian(self) -> bool:
        return self.hermitian_residual() <= HERMITIAN_TOL

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(_hermitize(self.matrix)).min())

    def is_positive(self) -> bool:
        return self.is_hermitian() and self.min_eigenvalue() >= -POSITIVITY_TOL

    def is_density(self) -> bool:
        return self.is_positive() and abs(self.trace - 1.0) <= HERMITIAN_TOL


@dataclass(frozen=True, eq=False)
class Povm:
    elements: tuple[SpanOperator, ...]

    def __post_init__(self) -> None:
        elements = tuple(self.elements)
        if not elements:
            raise InvalidParameterError("elements", elements, "a POVM needs at least one element")
        dims = {e.dim for e in elements}
        if len(dims) != 1:
            raise InvalidParameterError("elements", sorted(dims), "elements act on different spans")
        for index, element in enumerate(elements):
            if not element.is_positive():
                raise InvalidParameterError(
                    f"elements[{index}]", element.min_eigenvalue(), "must be positive semidefinite"
                )
        object.__setattr__(self, "elements", elements)
        residual = self.completeness_residual
        if residual > COMPLETENESS_TOL:
            raise InvalidParameterError("elements", residual, "elements must sum to the identity")

    @property
    def size(self) -> int:
        return len(self.elements)

    @property
    def dim(self) -> int:
        return self.elements[0].dim

    @property
    def stack(self) -> np.ndarray:
        return np.stack([e.matrix for e in self.elements])

    @property
    def completeness_residual(self) -> float:
        total = self.stack.sum(axis=0)
        return float(np.max(np.abs(total - np.eye(self.dim))))

    @property
    def states(self) -> np.ndarray | None:
        return self.elements[0].basis_transform


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """``probabilities[m, l] = P(l | m)``."""

    probabilities: np.ndarray
    rank: int | None = None
    discarded: float = 0.0

    def __post_init__(self) -> None:
        probabilities = np.asarray(self.probabilities, dtype=float)
        if probabilities.ndim != 2:
            raise InvalidParameterError("probabilities", probabilities.shape, "must be a matrix")
        if np.any(probabilities < -1e-12) or np.any(probabilities > 1 + 1e-12):
            raise NumericalConsistencyError(
                "channel probabilities outside [0, 1]",
                float(max(-probabilities.min(), probabilities.max() - 1.0)),
            )
        probabilities = np.clip(probabilities, 0.0, 1.0)
        row_error = float(np.max(np.abs(probabilities.sum(axis=1) - 1.0)))
        if row_error > 1e-10:
            raise NumericalConsistencyError("channel rows do not sum to 1", row_error)
        object.__setattr__(self, "probabilities", probabilities)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probabilities.shape

    def correct_probabilities(self) -> np.ndarray:
        return np.diag(self.probabilities).copy()

    def error_probability(self, priors: Any = None) -> float:
        correct = self.correct_probabilities()
        if priors is None:
            return max(0.0, float(1.0 - correct.mean()))
        return max(0.0, float(1.0 - np.dot(np.asarray(priors, dtype=float), correct)))


@dataclass(frozen=True)
class BayesResidual:
    offdiag: float
    positivity: float

    def satisfied(self, tol: float = 1e-9) -> bool:
        return self.offdiag <= tol and self.positivity <= tol


@dataclass(frozen=True)
class MinimaxResidual(BayesResidual):
    spread: float = 0.0

    def satisfied(self, tol: float = 1e-9) -> bool:
        return super().satisfied(tol) and self.spread <= tol


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _hermitize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.conj().T)


def _as_matrix(operator: SpanOperator | np.ndarray) -> np.ndarray:
    if isinstance(operator, SpanOperator):
        return operator.matrix
    return np.asarray(operator, dtype=complex)


def _entropy_bits(eigenvalues: np.ndarray) -> float:
    weights = np.clip(np.real(eigenvalues), 0.0, None)
    if weights.sum() <= 0:
        return 0.0
    return float(entropy(weights, base=2))


def _states_for(ensemble: PureStateEnsemble, povm: Povm) -> np.ndarray:
    states = povm.states
    if states is None:
        states = span_basis(ensemble).states
    if states.shape != (povm.dim, ensemble.size):
        raise InvalidParameterError(
            "povm", states.shape, f"does not act on the span of {ensemble.size} states"
        )
    return states


def _weighted_states(ensemble: PureStateEnsemble, states: np.ndarray) -> np.ndarray:
    # W_m = xi_m |alpha_m><alpha_m| in the span basis, stacked on axis 0
    return ensemble.priors[:, None, None] * np.einsum("rm,sm->mrs", states, states.conj())


# ---------------------------------------------------------------------------
# Overlaps and the span
# ---------------------------------------------------------------------------


def coherent_overlap(a: Any, b: Any) -> Any:
    """<a|b> for coherent states; broadcasts over numpy arrays."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    value = np.exp(-0.5 * np.abs(a) ** 2 - 0.5 * np.abs(b) ** 2 + np.conj(a) * b)
    if value.ndim == 0:
        return complex(value)
    return value


def gram_matrix(ensemble: PureStateEnsemble) -> np.ndarray:
    alphas = ensemble.amplitudes
    gram = coherent_overlap(alphas[:, None], alphas[None, :])
    np.fill_diagonal(gram, 1.0)
    return _hermitize(gram)


def span_basis(ensemble: PureStateEnsemble, tol: float = RANK_TOL) -> SpanBasis:
    """Orthonormalise the span through the Gram eigendecomposition."""
    eigenvalues, eigenvectors = np.linalg.eigh(gram_matrix(ensemble))
    keep = eigenvalues >= tol
    kept_values = eigenvalues[keep]
    kept_vectors = eigenvectors[:, keep]
    states = np.sqrt(kept_values)[:, None] * kept_vectors.conj().T
    discarded = float(np.clip(eigenvalues[~keep], 0.0, None).sum())
    return SpanBasis(kept_values, kept_vectors, states, discarded)


def density_operators(ensemble: PureStateEnsemble, basis: SpanBasis | None = None) -> list[SpanOperator]:
    basis = basis or span_basis(ensemble)
    states = basis.states
    return [
        SpanOperator(np.outer(states[:, m], states[:, m].conj()), states)
        for m in range(ensemble.size)
    ]


# ---------------------------------------------------------------------------
# Square-root measurement
# ---------------------------------------------------------------------------


def srm_povm(ensemble: PureStateEnsemble, basis: SpanBasis | None = None) -> Povm:
    """Square-root measurement ``|mu_l> = G^{-1/2} |alpha_l>`` on the span."""
    basis = basis or span_basis(ensemble)
    vectors = basis.eigenvectors.conj().T  # column l is mu_l
    elements = tuple(
        SpanOperator(np.outer(vectors[:, l], vectors[:, l].conj()), basis.states)
        for l in range(ensemble.size)
    )
    return Povm(elements)


def channel_matrix(ensemble: PureStateEnsemble, povm: Povm) -> ChannelMatrix:
    """P(l|m) = <alpha_m| Pi_l |alpha_m> for an arbitrary POVM on the span."""
    states = _states_for(ensemble, povm)
    probabilities = np.einsum("rm,lrs,sm->ml", states.conj(), povm.stack, states).real
    return ChannelMatrix(probabilities)


def srm_channel(ensemble: PureStateEnsemble) -> ChannelMatrix:
    """SRM channel ``P(l|m) = |(G^{1/2})_{lm}|^2``; rank loss is recorded, not raised."""
    basis = span_basis(ensemble)
    vectors = basis.eigenvectors
    root = (vectors * np.sqrt(basis.eigenvalues)) @ vectors.conj().T
    probabilities = np.abs(root.T) ** 2
    probabilities /= probabilities.sum(axis=1, keepdims=True)
    return ChannelMatrix(probabilities, rank=basis.rank, discarded=basis.discarded)


def srm_error_covariant(N: int, overlaps: Any) -> float:
    """SRM error of N covariant pure states from the first Gram row.

    The circulant eigenvalues are the N-point DFT of ``overlaps``; values below
    :data:`RANK_TOL` are dropped as in :func:`span_basis`.
    """
    overlaps = np.asarray(overlaps, dtype=complex)
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise InvalidParameterError("N", N, "must be a positive integer")
    if overlaps.shape != (N,):
        raise InvalidParameterError("overlaps", overlaps.shape, f"expected {N} overlaps")
    eigenvalues = np.fft.fft(overlaps).real
    if eigenvalues.min() < -POSITIVITY_TOL:
        raise NumericalConsistencyError(
            "circulant Gram row has a negative eigenvalue", float(eigenvalues.min())
        )
    kept = eigenvalues[eigenvalues >= RANK_TOL]
    return max(0.0, float(1.0 - np.sqrt(kept).sum() ** 2 / N**2))


# ---------------------------------------------------------------------------
# Helstrom
# ---------------------------------------------------------------------------


def helstrom_binary_pure(kappa_sq: float, xi: float) -> float:
    """Minimum error for two pure states with ``|<a0|a1>|^2 = kappa_sq`` and prior ``xi``."""
    if not 0.0 <= kappa_sq <= 1.0:
        raise InvalidParameterError("kappa_sq", kappa_sq, "must lie in [0, 1]")
    if not 0.0 < xi < 1.0:
        raise InvalidParameterError("xi", xi, "must lie in (0, 1)")
    return 0.5 * (1.0 - math.sqrt(max(0.0, 1.0 - 4.0 * xi * (1.0 - xi) * kappa_sq)))


def _check_density_pair(rho0: SpanOperator | np.ndarray, rho1: SpanOperator | np.ndarray):
    pair = []
    for name, rho in (("rho0", rho0), ("rho1", rho1)):
        operator = rho if isinstance(rho, SpanOperator) else SpanOperator(rho)
        if not operator.is_density():
            raise InvalidParameterError(name, operator.trace, "is not a density operator")
        pair.append(operator.matrix)
    if pair[0].shape != pair[1].shape:
        raise InvalidParameterError("rho1", pair[1].shape, f"does not match rho0 {pair[0].shape}")
    return pair[0], pair[1]


def helstrom_binary_mixed(
    rho0: SpanOperator | np.ndarray, rho1: SpanOperator | np.ndarray, xi: float = 0.5
) -> float:
    """Minimum error ``(1 - ||xi*rho1 - (1-xi)*rho0||_1) / 2``; ``xi`` is the prior of ``rho1``."""
    if not 0.0 < xi < 1.0:
        raise InvalidParameterError("xi", xi, "must lie in (0, 1)")
    m0, m1 = _check_density_pair(rho0, rho1)
    difference = _hermitize(xi * m1 - (1.0 - xi) * m0)
    trace_norm = float(np.abs(np.linalg.eigvalsh(difference)).sum())
    return max(0.0, 0.5 * (1.0 - trace_norm))


def helstrom_povm(
    rho0: SpanOperator | np.ndarray, rho1: SpanOperator | np.ndarray, xi: float = 0.5
) -> Povm:
    """Bayes-optimal binary measurement: Pi_1 projects onto the positive part of xi*rho1 - (1-xi)*rho0."""
    if not 0.0 < xi < 1.0:
        raise InvalidParameterError("xi", xi, "must lie in (0, 1)")
    m0, m1 = _check_density_pair(rho0, rho1)
    eigenvalues, eigenvectors = np.linalg.eigh(_hermitize(xi * m1 - (1.0 - xi) * m0))
    positive = eigenvectors[:, eigenvalues > 0]
    pi1 = positive @ positive.conj().T
    pi0 = np.eye(m0.shape[0]) - pi1
    transform = rho0.basis_transform if isinstance(rho0, SpanOperator) else None
    return Povm((SpanOperator(pi0, transform), SpanOperator(pi1, transform)))


# ---------------------------------------------------------------------------
# Optimality conditions
# ---------------------------------------------------------------------------


def verify_bayes_conditions(ensemble: PureStateEnsemble, povm: Povm) -> BayesResidual:
    """Residuals of the Bayes optimality conditions for ``povm``.

    ``offdiag`` is the largest spectral norm of ``Pi_m (W_m - W_l) Pi_l`` and
    ``positivity`` the largest negative eigenvalue of ``gamma - W_l`` (clipped at 0),
    with ``W_m = xi_m rho_m`` and ``gamma = sum_l W_l Pi_l`` symmetrised.
    """
    states = _states_for(ensemble, povm)
    if povm.size != ensemble.size:
        raise InvalidParameterError("povm", povm.size, f"expected {ensemble.size} elements")
    weighted = _weighted_states(ensemble, states)
    projectors = povm.stack

    offdiag = 0.0
    for m in range(ensemble.size):
        # Pi_m (W_m - W_l) Pi_l for every l at once
        terms = (projectors[m] @ (weighted[m] - weighted)) @ projectors
        norms = np.linalg.norm(terms, ord=2, axis=(-2, -1))
        norms[m] = 0.0
        offdiag = max(offdiag, float(norms.max()))

    gamma = _hermitize(np.einsum("lab,lbc->ac", weighted, projectors))
    lowest = min(float(np.linalg.eigvalsh(gamma - w).min()) for w in weighted)
    return BayesResidual(offdiag=offdiag, positivity=max(0.0, -lowest))


def verify_minimax_conditions(ensemble: PureStateEnsemble, povm: Povm) -> MinimaxResidual:
    bayes = verify_bayes_conditions(ensemble, povm)
    correct = channel_matrix(ensemble, povm).correct_probabilities()
    return MinimaxResidual(
        offdiag=bayes.offdiag,
        positivity=bayes.positivity,
        spread=float(correct.max() - correct.min()),
    )


def verify_mi_condition(ensemble: PureStateEnsemble, povm: Povm) -> float:
    """Largest ``||Pi_j (F_j - F_i) Pi_i||`` for the accessible-information condition."""
    states = _states_for(ensemble, povm)
    weighted = _weighted_states(ensemble, states)
    probabilities = channel_matrix(ensemble, povm).probabilities  # [l, j]
    outputs = ensemble.priors @ probabilities
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(
            probabilities > 0, np.log2(probabilities / np.where(outputs > 0, outputs, 1.0)), 0.0
        )
    F = np.einsum("lj,lab->jab", log_ratio, weighted)
    projectors = povm.stack
    residual = 0.0
    for j in range(povm.size):
        if outputs[j] <= 0:
            continue
        for i in range(povm.size):
            if i == j or outputs[i] <= 0:
                continue
            term = projectors[j] @ (F[j] - F[i]) @ projectors[i]
            residual = max(residual, float(np.linalg.norm(term, ord=2)))
    return residual


# ---------------------------------------------------------------------------
# Information
# ---------------------------------------------------------------------------


def von_neumann_entropy(operator: SpanOperator | np.ndarray) -> float:
    return _entropy_bits(np.linalg.eigvalsh(_hermitize(_as_matrix(operator))))


def holevo_information(ensemble: PureStateEnsemble) -> float:
    """Holevo quantity of a pure-state ensemble: entropy of ``D^1/2 G D^1/2``."""
    root = np.sqrt(ensemble.priors)
    weighted_gram = root[:, None] * gram_matrix(ensemble) * root[None, :]
    return _entropy_bits(np.linalg.eigvalsh(_hermitize(weighted_gram)))


def holevo_covariant(N: int, overlaps: Any) -> float:
    """Holevo quantity of N equiprobable covariant states from the first Gram row."""
    overlaps = np.asarray(overlaps, dtype=complex)
    if overlaps.shape != (N,):
        raise InvalidParameterError("overlaps", overlaps.shape, f"expected {N} overlaps")
    return _entropy_bits(np.fft.fft(overlaps).real / N)


def mutual_information(channel: ChannelMatrix | np.ndarray, priors: Any) -> float:
    conditional = channel.probabilities if isinstance(channel, ChannelMatrix) else np.asarray(channel)
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (conditional.shape[0],):
        raise InvalidParameterError("priors", priors.shape, f"expected {conditional.shape[0]} priors")
    joint = priors[:, None] * conditional
    outputs = joint.sum(axis=0)
    independent = priors[:, None] * outputs[None, :]
    mask = joint > 0
    return float(max(0.0, np.sum(joint[mask] * np.log2(joint[mask] / independent[mask]))))


# ---------------------------------------------------------------------------
# Ensembles of the cipher
# ---------------------------------------------------------------------------


def psk_ensemble(n_points: int, amplitude: float, priors: Any = None) -> PureStateEnsemble:
    """N-PSK coherent states ``amplitude * exp(2 pi i k / N)``; uniform priors by default."""
    if isinstance(n_points, bool) or int(n_points) != n_points or n_points < 1:
        raise InvalidParameterError("n_points", n_points, "must be a positive integer")
    if not amplitude > 0:
        raise InvalidParameterError("amplitude", amplitude, "must be positive")
    alphas = amplitude * np.exp(2j * np.pi * np.arange(n_points) / n_points)
    if priors is None:
        return PureStateEnsemble.uniform(alphas)
    return PureStateEnsemble(alphas, priors)


def psk_overlaps(n_points: int, amplitude: float) -> np.ndarray:
    """First Gram row ``<alpha_1|alpha_k>`` of N-PSK."""
    alphas = amplitude * np.exp(2j * np.pi * np.arange(n_points) / n_points)
    return coherent_overlap(alphas[0], alphas)


def block_ensemble(qndm: QndmConstellation, block: int) -> PureStateEnsemble:
    """The M coherent states of QNDM block ``block`` (1..2M) with uniform priors."""
    if not 1 <= block <= len(qndm.blocks):
        raise InvalidParameterError("block", block, f"must be in 1..{len(qndm.blocks)}")
    indices = np.asarray(qndm.blocks[block - 1])
    return PureStateEnsemble.uniform(qndm.complex_points()[indices])


def data_mixtures(
    constellation: Y00Constellation | QndmConstellation, osk: bool = False
) -> tuple[SpanOperator, SpanOperator]:
    """Eve's view of data 0 and data 1 when the running key is uniformly unknown.

    Without OSK each bit is the uniform mixture of the points labelled with it; with
    OSK every bit value can occupy every point, so both mixtures are the full average.
    """
    ensemble = PureStateEnsemble.uniform(constellation.complex_points())
    basis = span_basis(ensemble)
    states = basis.states

    def mixture(columns: np.ndarray) -> SpanOperator:
        selected = states[:, columns]
        return SpanOperator(selected @ selected.conj().T / columns.size, states)

    if osk:
        everything = np.arange(ensemble.size)
        return mixture(everything), mixture(everything)
    bits = np.asarray(constellation.bits)
    return mixture(np.flatnonzero(bits == 0)), mixture(np.flatnonzero(bits == 1))
