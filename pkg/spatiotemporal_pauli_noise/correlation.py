"""Transfer-operator analysis of time-homogeneous Pauli processes."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from .conf import DEFAULT_SETTINGS, get_setting
from .exceptions import (
    DimensionError,
    NonErgodicError,
    SpectrumConvergenceError,
)
from .rng import draw_categorical
from .tensor import real_spectrum
from .utils import pauli_index

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransferOperator:
    kernels: Tuple[np.ndarray, ...]

    def __post_init__(self):
        kernels = tuple(np.asarray(a) for a in self.kernels)
        if not kernels:
            raise DimensionError("A transfer operator needs at least one label matrix")
        shape = kernels[0].shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise DimensionError(f"Label matrices must be square, got {shape}")
        if any(a.shape != shape for a in kernels):
            raise DimensionError("Label matrices differ in shape")
        object.__setattr__(self, "kernels", kernels)

    @classmethod
    def from_stack(cls, stack):
        """Build from an array with the label axis first."""
        return cls(tuple(np.asarray(stack)))

    @property
    def matrix(self):
        return sum(self.kernels)

    @property
    def dim(self):
        return self.kernels[0].shape[0]

    @property
    def labels(self):
        return len(self.kernels)

    def emission(self, f):
        """Emission operator ``E_f = sum_x f(x) A_x``."""
        return EmissionOperator(sum(w * a for w, a in zip(observable(f, self.labels), self.kernels)), f)

    def scaled(self, factor):
        return TransferOperator(tuple(a * factor for a in self.kernels))


@dataclass(frozen=True)
class EmissionOperator:
    matrix: np.ndarray
    f: object


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray
    lambda_star: float
    gap: float
    xi: Optional[float]
    left: Optional[np.ndarray]
    right: Optional[np.ndarray]
    ergodic: bool
    unit_eigenvalues: List[complex] = field(default_factory=list)
    non_normality: float = 0.0
    leading: complex = 1.0

    def as_dict(self):
        return {
            "eigenvalues": [[float(v.real), float(v.imag)] for v in self.eigenvalues],
            "lambda_star": self.lambda_star,
            "gap": self.gap,
            "xi": self.xi,
            "ergodic": self.ergodic,
            "unit_eigenvalues": [[float(v.real), float(v.imag)] for v in self.unit_eigenvalues],
            "non_normality": self.non_normality,
            "left": None if self.left is None else np.real(self.left).tolist(),
            "right": None if self.right is None else np.real(self.right).tolist(),
        }


@dataclass(frozen=True)
class HmmCheck:
    is_hmm: bool
    violations: List[tuple]
    kernels: Optional[Tuple[np.ndarray, ...]] = None


def observable(f, labels=4):
    """Coerce an observable to a vector over Pauli labels.

    Accepts a sequence of values, a mapping from label strings, a callable on
    label indices, or one of the names ``"error"`` (non-identity indicator) and
    a single Pauli label such as ``"X"`` (indicator of that label).
    """
    if isinstance(f, str):
        if f == "error":
            values = np.ones(labels)
            values[0] = 0.0
            return values
        values = np.zeros(labels)
        values[pauli_index(f)] = 1.0
        return values
    if isinstance(f, dict):
        values = np.zeros(labels)
        for key, value in f.items():
            values[pauli_index(key) if isinstance(key, str) else int(key)] = value
        return values
    if callable(f):
        return np.array([f(x) for x in range(labels)], dtype=float)
    values = np.asarray(f, dtype=float)
    if values.shape != (labels,):
        raise DimensionError(f"Observable has shape {values.shape}, expected ({labels},)")
    return values


def transfer_from_mps(mps, site):
    """Label matrices of a bulk MPS site."""
    if not 0 < site < mps.k:
        raise DimensionError(f"Site {site} is a boundary site of an MPS with k={mps.k}")
    tensor = mps.site_tensors[site]
    return TransferOperator(tuple(np.real_if_close(tensor[:, x, :]) for x in range(tensor.shape[1])))


def non_normality(t):
    """Frobenius norm of ``[T, T^T]`` relative to ``||T||^2``."""
    norm = np.linalg.norm(t) ** 2
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(t @ t.T - t.T @ t) / norm)


def spectral_summary(t):
    """Spectrum, gap, correlation length and fixed points of a transfer operator."""
    matrix = t.matrix
    spectrum = real_spectrum(matrix)
    values = spectrum.eigenvalues
    leading = values[0]
    if abs(leading) == 0:
        raise SpectrumConvergenceError("Transfer operator is nilpotent")
    normalized = values / leading
    tol = get_setting("DEGENERACY_TOL", DEFAULT_SETTINGS["DEGENERACY_TOL"])
    unit = [complex(v) for v in normalized if abs(abs(v) - 1) < tol]
    lambda_star = float(abs(normalized[1])) if len(normalized) > 1 else 0.0
    ergodic = len(unit) == 1 and spectrum.left is not None
    if not ergodic:
        logger.warning(f"Transfer operator is not ergodic: {len(unit)} unit-magnitude eigenvalues")
        xi = None
    elif lambda_star == 0.0:
        xi = 0.0
    else:
        xi = -1.0 / math.log(lambda_star)
    left, right = spectrum.left, spectrum.right
    return SpectralSummary(
        eigenvalues=normalized,
        lambda_star=lambda_star,
        gap=1.0 - lambda_star,
        xi=xi,
        left=left,
        right=right,
        ergodic=ergodic,
        unit_eigenvalues=unit,
        non_normality=non_normality(matrix),
        leading=complex(leading),
    )


def _ergodic_parts(t, summary=None):
    if summary is None:
        summary = spectral_summary(t)
    if not summary.ergodic:
        raise NonErgodicError("Correlation functions need a simple leading eigenvalue")
    norm = t.scaled(1.0 / summary.leading.real if summary.leading.imag == 0 else 1.0 / summary.leading)
    return norm, summary.left, summary.right


def stationary_mean(t, f, summary=None):
    norm, left, right = _ergodic_parts(t, summary)
    return float(np.real(left @ norm.emission(f).matrix @ right))


def stationary_marginals(t, summary=None):
    """Stationary probability of every label, ``<l|A_x|r>``."""
    norm, left, right = _ergodic_parts(t, summary)
    return np.array([np.real(left @ a @ right) for a in norm.kernels])


def _centred(norm, f, left, right):
    e = norm.emission(f).matrix
    mean = left @ e @ right
    return e - mean * norm.matrix


def covariance(t, f, g, tau, summary=None):
    """Connected two-point function at lag ``tau >= 1``."""
    if tau < 1:
        raise ValueError(f"Lag must be at least 1, got {tau}")
    norm, left, right = _ergodic_parts(t, summary)
    ef = _centred(norm, f, left, right)
    eg = _centred(norm, g, left, right)
    power = np.linalg.matrix_power(norm.matrix, tau - 1)
    return float(np.real(left @ ef @ power @ eg @ right))


def covariance_series(t, f, g, max_tau, summary=None):
    """``C(tau)`` for ``tau = 1 .. max_tau`` by repeated multiplication."""
    norm, left, right = _ergodic_parts(t, summary)
    ef = _centred(norm, f, left, right)
    eg = _centred(norm, g, left, right)
    row = left @ ef
    column = eg @ right
    values = []
    for _ in range(max_tau):
        values.append(float(np.real(row @ column)))
        row = row @ norm.matrix
    return np.array(values)


def covariance_spectral(t, f, g, taus, summary=None):
    """Covariance from the eigen-expansion of a diagonalisable transfer operator."""
    norm, left, right = _ergodic_parts(t, summary)
    ef = _centred(norm, f, left, right)
    eg = _centred(norm, g, left, right)
    try:
        values, vectors = scipy.linalg.eig(norm.matrix)
    except scipy.linalg.LinAlgError as e:
        raise SpectrumConvergenceError(f"Eigensolver did not converge: {e}") from e
    inverse = np.linalg.inv(vectors)
    a = (left @ ef) @ vectors
    b = inverse @ (eg @ right)
    taus = np.atleast_1d(taus)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.power.outer(values.astype(complex), taus - 1)
    # the leading mode carries no weight after centring
    return np.real((a * b) @ terms)


def multipoint(t, observables, summary=None):
    """Connected m-point correlator of ``[(f_1, t_1), ..., (f_m, t_m)]``."""
    times = [time for _, time in observables]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"Times must be strictly increasing, got {times}")
    norm, left, right = _ergodic_parts(t, summary)
    vector = left
    for j, (f, time) in enumerate(observables):
        vector = vector @ _centred(norm, f, left, right)
        if j + 1 < len(observables):
            gap = times[j + 1] - time - 1
            vector = vector @ np.linalg.matrix_power(norm.matrix, gap)
    return float(np.real(vector @ right))


def hmm_check(a_matrices, tol=None):
    """Check that label matrices form an edge-emitting hidden Markov model."""
    if tol is None:
        tol = get_setting("HMM_TOL", DEFAULT_SETTINGS["HMM_TOL"])
    kernels = tuple(np.asarray(a) for a in a_matrices)
    violations = []
    for x, a in enumerate(kernels):
        if np.iscomplexobj(a) and np.max(np.abs(a.imag), initial=0.0) > tol:
            violations.append(("complex", x, None, None, float(np.max(np.abs(a.imag)))))
        real = np.real(a)
        for i, j in zip(*np.nonzero(real < -tol)):
            violations.append(("negative", x, int(i), int(j), float(real[i, j])))
    rows = sum(np.real(a) for a in kernels).sum(axis=1)
    for i, total in enumerate(rows):
        if abs(total - 1) > tol:
            violations.append(("row_sum", None, int(i), None, float(total)))
    if violations:
        logger.debug(f"HMM check failed with {len(violations)} violations")
        return HmmCheck(False, violations)
    return HmmCheck(True, [], tuple(np.real(a) for a in kernels))


def hmm_likelihood(kernels, initial, sequence):
    """Forward-filter probability of an emitted label sequence."""
    alpha = np.asarray(initial, dtype=float)
    for x in sequence:
        alpha = alpha @ kernels[int(x)]
    return float(alpha.sum())


def hmm_sample(kernels, initial, steps, rng, count=1):
    """Forward simulation of an edge-emitting HMM.

    Each step draws the joint (label, next state) pair from the row of the
    current hidden state. Returns labels of shape ``(count, steps)``.
    """
    kernels = np.asarray(kernels, dtype=float)
    labels, dim = kernels.shape[0], kernels.shape[1]
    # joint[i, x * dim + j] = (A_x)_{ij}
    joint = kernels.transpose(1, 0, 2).reshape(dim, labels * dim)
    cumulative = np.cumsum(joint, axis=1)
    state = draw_categorical(np.cumsum(initial)[None, :].repeat(count, 0), rng.random(count))
    out = np.empty((count, steps), dtype=int)
    for step in range(steps):
        pair = draw_categorical(cumulative[state], rng.random(count))
        out[:, step] = pair // dim
        state = pair % dim
    return out


def empirical_covariance(series_f, series_g, tau):
    """Sample covariance between ``f`` at time ``t`` and ``g`` at ``t + tau`` with its standard error.

    Series have shape ``(chains, steps)``; the estimate pools all chains.
    """
    a = series_f[:, :-tau].reshape(-1)
    b = series_g[:, tau:].reshape(-1)
    product = (a - a.mean()) * (b - b.mean())
    return float(product.mean()), float(product.std(ddof=1) / math.sqrt(product.size))
