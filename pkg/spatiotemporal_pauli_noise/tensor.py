"""Dense tensor algebra and small-matrix linear algebra.

Vectorisation stacks columns: ``vec(A) = A.T.reshape(-1)``. Under this
convention ``vec(A X B) = (B.T kron A) vec(X)``, so the superoperator of
``X -> U X U^dag`` is ``conj(U) kron U`` and the fused index of a vectorised
operator is ``(bra, ket)`` with the bra index major.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .conf import DEFAULT_SETTINGS, get_setting
from .exceptions import DimensionError, NumericalValidationError, SpectrumConvergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HermitianEigen:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


@dataclass(frozen=True)
class RealSpectrum:
    """Eigenvalues sorted by descending magnitude.

    ``left`` and ``right`` hold the leading eigenvectors normalised so that
    ``left @ right == 1``; they are ``None`` when the matrix is defective at
    the leading eigenvalue.
    """

    eigenvalues: np.ndarray
    left: Optional[np.ndarray] = None
    right: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.eigenvalues)


def _require_matrix(m, name="matrix"):
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {m.shape}")
    return m


def _require_square(m, name="matrix"):
    m = _require_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def kron(a, b):
    a = _require_matrix(a, "left factor")
    b = _require_matrix(b, "right factor")
    return np.kron(a, b)


def kron_all(*factors):
    out = np.ones((1, 1), dtype=complex)
    for factor in factors:
        out = kron(out, factor)
    return out


def vectorize(op):
    op = _require_square(op, "operator")
    return op.T.reshape(-1)


def devectorize(vec):
    vec = np.asarray(vec).reshape(-1)
    dim = int(round(np.sqrt(vec.size)))
    if dim * dim != vec.size:
        raise DimensionError(f"Vector of length {vec.size} is not a vectorised square matrix")
    return vec.reshape(dim, dim).T


def superoperator(unitary):
    """Superoperator of ``X -> U X U^dag`` in the column-stacking convention."""
    unitary = _require_square(unitary, "unitary")
    return np.kron(unitary.conj(), unitary)


def _check_dims(dims, name):
    dims = [int(d) for d in dims]
    if not dims or any(d < 1 for d in dims):
        raise DimensionError(f"{name} must be a non-empty list of positive dimensions, got {dims}")
    return dims


def rft_transform(superop, out_dims, in_dims=None):
    """Reorder, fuse and transpose a superoperator.

    ``superop`` maps vectorised operators on ``prod(in_dims)`` to vectorised
    operators on ``prod(out_dims)``. The result has one fused leg of size
    ``d**2`` per subsystem, input legs first, each leg indexed ``(bra, ket)``.
    """
    out_dims = _check_dims(out_dims, "out_dims")
    in_dims = _check_dims(in_dims if in_dims is not None else out_dims, "in_dims")
    d_out, d_in = int(np.prod(out_dims)), int(np.prod(in_dims))
    superop = _require_matrix(superop, "superoperator")
    if superop.shape != (d_out**2, d_in**2):
        raise DimensionError(
            f"Superoperator shape {superop.shape} does not match out_dims={out_dims}, in_dims={in_dims}"
        )
    m_out, m_in = len(out_dims), len(in_dims)
    t = superop.reshape(out_dims + out_dims + in_dims + in_dims)
    in_bra = range(2 * m_out, 2 * m_out + m_in)
    in_ket = range(2 * m_out + m_in, 2 * m_out + 2 * m_in)
    order = [axis for pair in zip(in_bra, in_ket) for axis in pair]
    order += [axis for pair in zip(range(m_out), range(m_out, 2 * m_out)) for axis in pair]
    t = t.transpose(order)
    return t.reshape([d * d for d in in_dims] + [d * d for d in out_dims])


def inverse_rft(tensor, out_dims, in_dims=None):
    """Inverse of :func:`rft_transform`."""
    out_dims = _check_dims(out_dims, "out_dims")
    in_dims = _check_dims(in_dims if in_dims is not None else out_dims, "in_dims")
    m_out, m_in = len(out_dims), len(in_dims)
    tensor = np.asarray(tensor)
    expected = tuple(d * d for d in in_dims) + tuple(d * d for d in out_dims)
    if tensor.shape != expected:
        raise DimensionError(f"RFT tensor shape {tensor.shape} does not match expected {expected}")
    split = []
    for d in in_dims + out_dims:
        split += [d, d]
    t = tensor.reshape(split)
    # axes now: (in_bra_0, in_ket_0, ..., out_bra_0, out_ket_0, ...)
    out_bra = [2 * m_in + 2 * s for s in range(m_out)]
    out_ket = [2 * m_in + 2 * s + 1 for s in range(m_out)]
    in_bra = [2 * s for s in range(m_in)]
    in_ket = [2 * s + 1 for s in range(m_in)]
    t = t.transpose(out_bra + out_ket + in_bra + in_ket)
    d_out, d_in = int(np.prod(out_dims)), int(np.prod(in_dims))
    return t.reshape(d_out**2, d_in**2)


def partial_trace(op, dims, traced):
    """Trace out the subsystems listed in ``traced``."""
    op = _require_square(op, "operator")
    dims = _check_dims(dims, "dims")
    if int(np.prod(dims)) != op.shape[0]:
        raise DimensionError(f"dims {dims} do not multiply to operator dimension {op.shape[0]}")
    traced = set(traced)
    if not traced <= set(range(len(dims))):
        raise DimensionError(f"Invalid traced subsystems {sorted(traced)} for {len(dims)} subsystems")
    m = len(dims)
    keep = [i for i in range(m) if i not in traced]
    t = op.reshape(dims + dims)
    row_labels = list(range(m))
    col_labels = [i if i in traced else m + i for i in range(m)]
    out_labels = keep + [m + i for i in keep]
    result = np.einsum(t, row_labels + col_labels, out_labels)
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return result.reshape(d_keep, d_keep)


def is_hermitian(m, tol=None):
    if tol is None:
        tol = get_setting("HERMITIAN_TOL", DEFAULT_SETTINGS["HERMITIAN_TOL"])
    m = np.asarray(m)
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * scale)


def is_unitary(m, tol=None):
    if tol is None:
        tol = get_setting("UNITARY_TOL", DEFAULT_SETTINGS["UNITARY_TOL"])
    m = _require_square(m, "matrix")
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])), initial=0.0) <= tol)


def hermitian_eigen(m):
    """Eigendecomposition of a Hermitian matrix with ascending eigenvalues."""
    m = _require_square(m, "matrix")
    m = (m + m.conj().T) / 2
    try:
        values, vectors = scipy.linalg.eigh(m)
    except scipy.linalg.LinAlgError as e:
        raise SpectrumConvergenceError(f"Hermitian eigensolver failed: {e}") from e
    return HermitianEigen(values, vectors)


def expm_hermitian(h):
    """Return ``exp(-i h)`` for Hermitian ``h``."""
    h = _require_square(h, "generator")
    if not is_hermitian(h):
        raise NumericalValidationError("Generator is not Hermitian within tolerance")
    eig = hermitian_eigen(h)
    v = eig.eigenvectors
    return (v * np.exp(-1j * eig.eigenvalues)) @ v.conj().T


def _spectrum_order(values):
    # descending magnitude, ties broken by real then imaginary part
    return np.lexsort((-values.imag, -values.real, -np.round(np.abs(values), 12)))


def real_spectrum(m):
    """Eigenvalues of a real square matrix sorted by descending magnitude.

    Also returns the leading left/right eigenvectors normalised so that their
    overlap is one.
    """
    m = _require_square(m, "matrix")
    cap = get_setting("SPECTRUM_DIM_CAP", DEFAULT_SETTINGS["SPECTRUM_DIM_CAP"])
    if m.shape[0] > cap:
        raise DimensionError(f"Spectrum dimension {m.shape[0]} exceeds cap {cap}")
    if not np.all(np.isfinite(m)):
        raise SpectrumConvergenceError("Matrix has non-finite entries")
    try:
        values, left, right = scipy.linalg.eig(m, left=True, right=True)
    except scipy.linalg.LinAlgError as e:
        raise SpectrumConvergenceError(f"Eigensolver did not converge: {e}") from e
    order = _spectrum_order(values)
    values = values[order]
    l1 = left[:, order[0]].conj()
    r1 = right[:, order[0]]
    overlap = l1 @ r1
    if abs(overlap) < 1e-12:
        logger.warning("Leading eigenvalue is defective, fixed points not returned")
        return RealSpectrum(values)
    # fix the phase so the right vector's dominant entry is positive
    pivot = r1[np.argmax(np.abs(r1))]
    r1 = r1 * (abs(pivot) / pivot)
    l1 = l1 / (l1 @ r1)
    if np.isreal(values[0]) or abs(values[0].imag) < 1e-14:
        r1, l1 = r1.real, l1.real
    return RealSpectrum(values, l1, r1)


def hermitian_basis(d):
    """Orthonormal Hermitian basis of ``d x d`` matrices as columns of vectorised operators.

    The basis holds the diagonal matrix units followed by symmetric and
    antisymmetric off-diagonal combinations; the returned matrix is unitary.
    """
    columns = []
    for i in range(d):
        g = np.zeros((d, d), dtype=complex)
        g[i, i] = 1
        columns.append(vectorize(g))
    for i in range(d):
        for j in range(i + 1, d):
            g = np.zeros((d, d), dtype=complex)
            g[i, j] = g[j, i] = 1 / np.sqrt(2)
            columns.append(vectorize(g))
            g = np.zeros((d, d), dtype=complex)
            g[i, j] = -1j / np.sqrt(2)
            g[j, i] = 1j / np.sqrt(2)
            columns.append(vectorize(g))
    return np.array(columns).T
