"""Spatiotemporal Pauli processes.

The multi-time Pauli twirl of a process tensor is a classical distribution
over Pauli trajectories. This module twirls process tensors densely and by
local tensor contraction, builds the trajectory-weight MPS of a dilation and
samples, reconstructs and analyses it.

MPS weights carry a factor ``4**-n`` per step: for a trace-preserving
dilation the weights are probabilities and the normalisation is one. The
corresponding dense Choi weight ``Tr[(x)_j Pi_{P_j} Upsilon]`` is larger by
``4**(n(k+1))``.
"""

import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .conf import DEFAULT_SETTINGS, get_setting
from .exceptions import DimensionError, NumericalValidationError
from .process import (
    UNIT_TRACE,
    ChoiOperator,
    ProcessTensorMPO,
    SEDilation,
    build_mpo,
    mpo_to_choi,
)
from .rng import draw_categorical, stream
from .tensor import (
    expm_hermitian,
    hermitian_basis,
    hermitian_eigen,
    kron_all,
    partial_trace,
    rft_transform,
    superoperator,
    vectorize,
)
from .utils import (
    PAULIS,
    conjugate_monomial,
    pauli_basis,
    pauli_index,
    pauli_label,
    pauli_monomial,
    render_csv,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PauliTensor:
    """Pauli tensor with legs ``(alpha, beta, x)``.

    ``array[:, :, x]`` is the reordered superoperator of conjugation by the
    ``x``-th Pauli string.
    """

    array: np.ndarray
    n: int

    @property
    def size(self):
        return 4**self.n

    def twirl_projector(self):
        """Twirl as a map on fused ``(alpha', beta') -> (alpha, beta)`` legs."""
        p = self.array
        return np.einsum("aAx,bBx->abAB", p, p) / self.size


@lru_cache(maxsize=4)
def pauli_tensor(n):
    d = 2**n
    slices = [rft_transform(superoperator(p), [d]) for p in pauli_basis(n)]
    array = np.stack(slices, axis=-1)
    array.setflags(write=False)
    return PauliTensor(array, n)


@dataclass(frozen=True)
class SppMps:
    """Trajectory-weight MPS with site legs ``(mu_j, x_j, mu_{j+1})``.

    Boundary sites carry an outer bond of size one. ``basis`` is the Hermitian
    gauge applied to the environment bonds, used to undo it on reconstruction.
    """

    site_tensors: Tuple[np.ndarray, ...]
    n: int
    basis: Optional[np.ndarray] = None

    @property
    def k(self):
        return len(self.site_tensors) - 1

    @property
    def bond_dims(self):
        return [t.shape[2] for t in self.site_tensors[:-1]]

    @property
    def normalization(self):
        v = np.ones(1)
        for site in self.site_tensors:
            v = v @ site.sum(axis=1)
        return float(np.real(v[0]))

    @property
    def is_real(self):
        return all(np.isrealobj(t) for t in self.site_tensors)


@dataclass(frozen=True)
class TrajectoryDistribution:
    probabilities: np.ndarray
    n: int
    k: int

    def __post_init__(self):
        if self.probabilities.shape != (4 ** (self.n * (self.k + 1)),):
            raise DimensionError(f"Distribution size {self.probabilities.shape} does not match n, k")

    def label(self, index):
        size = 4**self.n
        parts = []
        for _ in range(self.k + 1):
            parts.append(pauli_label(index % size, self.n))
            index //= size
        return tuple(reversed(parts))

    def as_dict(self, threshold=0.0):
        return {
            self.label(i): float(p) for i, p in enumerate(self.probabilities) if abs(p) > threshold
        }


@dataclass(frozen=True)
class EntropyResult:
    """Relative entropy in nats; ``divergent`` flags a support mismatch."""

    value: float
    divergent: bool = False

    def __float__(self):
        return self.value


def _slot_twirl_monomials(n, slots, slot):
    registers = 2 * slots
    for p in range(4**n):
        digits = []
        for reg in range(registers):
            if reg in (2 * slot, 2 * slot + 1):
                digits += _digits(p, n)
            else:
                digits += [0] * n
        yield pauli_monomial(digits)


def _digits(index, n):
    return [(index >> (2 * (n - 1 - q))) & 3 for q in range(n)]


def dense_multi_time_twirl(choi):
    """Group average over Pauli sandwiches ``(P_j (x) P_j)`` on every slot."""
    cap = get_setting("DENSE_DIM_CAP", DEFAULT_SETTINGS["DENSE_DIM_CAP"])
    if choi.matrix.shape[0] > cap:
        raise DimensionError(f"Choi dimension {choi.matrix.shape[0]} exceeds cap {cap}")
    matrix = np.asarray(choi.matrix, dtype=complex)
    slots = choi.slots + 1
    for slot in range(slots):
        acc = np.zeros_like(matrix)
        for perm, phase in _slot_twirl_monomials(choi.qubits, slots, slot):
            acc += conjugate_monomial(matrix, perm, phase)
        matrix = acc / 4**choi.qubits
    return choi.with_matrix(matrix)


def twirl_mpo_local(mpo):
    """Twirl each time step by contracting two Pauli tensors on its open legs."""
    p = pauli_tensor(mpo.n)
    sites = tuple(
        np.einsum("mavb,aAx,bBx->mAvB", site, p.array, p.array) / p.size for site in mpo.site_tensors
    )
    return ProcessTensorMPO(sites, mpo.sigma, mpo.trace, mpo.d_S)


def absorb_boundaries(mpo):
    """Fold the environment boundary vectors into the first and last sites."""
    sites = list(mpo.site_tensors)
    sites[0] = np.tensordot(mpo.sigma, sites[0], axes=([0], [0]))[None]
    sites[-1] = np.tensordot(sites[-1], mpo.trace, axes=([2], [0]))[:, :, None, :]
    one = np.ones(1, dtype=complex)
    return ProcessTensorMPO(tuple(sites), one, one, mpo.d_S)


def _site_weights(site, p):
    # A[mu, x, nu] = 4**-n sum U[mu, alpha, nu, beta] P[alpha, beta, x]
    return np.einsum("mavb,abx->mxv", site, p.array) / p.size


def spp_mps_from_mpo(mpo):
    """Trajectory-weight MPS of a process-tensor MPO with square-dimensional bonds."""
    p = pauli_tensor(mpo.n)
    bond = mpo.sigma.shape[0]
    d_E = int(round(math.sqrt(bond)))
    if d_E * d_E != bond:
        raise DimensionError(f"Bond dimension {bond} is not an environment Liouville dimension")
    basis = hermitian_basis(d_E)
    sites = []
    for site in mpo.site_tensors:
        a = _site_weights(site, p)
        sites.append(np.einsum("mi,mxv,vj->ixj", basis.conj(), a, basis))
    sigma = mpo.sigma @ basis
    trace = basis.conj().T @ mpo.trace
    sites[0] = np.tensordot(sigma, sites[0], axes=([0], [0]))[None]
    sites[-1] = np.tensordot(sites[-1], trace, axes=([2], [0]))[:, :, None]

    tol = get_setting("IMAG_TOL", DEFAULT_SETTINGS["IMAG_TOL"])
    residue = max(float(np.max(np.abs(s.imag), initial=0.0)) for s in sites)
    if residue <= tol:
        sites = [np.ascontiguousarray(s.real) for s in sites]
    else:
        logger.warning(f"SPP MPS keeps complex tensors, imaginary residue {residue:.3e}")
    return SppMps(tuple(sites), mpo.n, basis)


def build_spp_mps(dilation):
    """Build the trajectory-weight MPS of a dilation."""
    return spp_mps_from_mpo(build_mpo(dilation))


def _label_indices(mps, labels):
    if len(labels) != mps.k + 1:
        raise DimensionError(f"Expected {mps.k + 1} labels, got {len(labels)}")
    indices = []
    for label in labels:
        index = pauli_index(label) if isinstance(label, str) else int(label)
        if isinstance(label, str) and len(label) != mps.n:
            raise DimensionError(f"Label {label!r} does not act on {mps.n} qubits")
        if not 0 <= index < 4**mps.n:
            raise DimensionError(f"Invalid Pauli label {label!r}")
        indices.append(index)
    return indices


def trajectory_weight(mps, labels):
    """Weight of one Pauli trajectory by left-to-right matrix products."""
    v = np.ones(1)
    for site, x in zip(mps.site_tensors, _label_indices(mps, labels)):
        v = v @ site[:, x, :]
    return float(np.real(v[0]))


def trajectory_probability(mps, labels):
    return trajectory_weight(mps, labels) / mps.normalization


def enumerate_weights(mps):
    """Dense table of all trajectory weights, lexicographic in time."""
    cap = get_setting("DENSE_DIM_CAP", DEFAULT_SETTINGS["DENSE_DIM_CAP"])
    size = 4 ** (mps.n * (mps.k + 1))
    if size > cap:
        raise DimensionError(f"Trajectory table of size {size} exceeds cap {cap}")
    table = np.ones((1, 1))
    for site in mps.site_tensors:
        table = np.tensordot(table, site, axes=([1], [0]))
        table = table.reshape(-1, site.shape[2])
    return np.real(table.reshape(-1))


def trajectory_distribution(mps):
    weights = enumerate_weights(mps)
    band = get_setting("CLAMP_BAND", DEFAULT_SETTINGS["CLAMP_BAND"])
    if weights.min(initial=0.0) < -band:
        raise NumericalValidationError(f"Negative trajectory weight {weights.min():.3e}")
    probabilities = np.clip(weights, 0.0, None)
    return TrajectoryDistribution(probabilities / probabilities.sum(), mps.n, mps.k)


def choi_trajectory_weights(choi):
    """Dense weights ``Tr[(x)_j Pi_{P_j} Upsilon]`` with ``Pi_P`` the Pauli-channel projector."""
    d, n = choi.d_S, choi.qubits
    single = np.stack([vectorize(p) for p in pauli_basis(n)], axis=1)
    v = kron_all(*([single] * (choi.slots + 1)))
    weights = np.einsum("ix,ij,jx->x", v.conj(), choi.matrix, v)
    return np.real(weights) / d ** (choi.slots + 1)


def sample_trajectories(mps, seed, count, rng=None):
    """Exact ancestral sampling of Pauli trajectories.

    Returns an integer array of shape ``(count, k + 1)`` of Pauli indices.
    """
    if rng is None:
        rng = stream(seed, "spp-sample")
    band = get_setting("CLAMP_BAND", DEFAULT_SETTINGS["CLAMP_BAND"])
    sites = [np.real_if_close(s) for s in mps.site_tensors]
    rights = [np.ones(1)]
    for site in reversed(sites):
        rights.insert(0, site.sum(axis=1) @ rights[0])
    total = float(np.real(rights[0][0]))
    if total <= 0:
        raise NumericalValidationError(f"MPS normalisation {total} is not positive")

    left = np.ones((count, 1))
    samples = np.empty((count, len(sites)), dtype=int)
    rows = np.arange(count)
    for j, site in enumerate(sites):
        mass = np.real(left @ (site @ rights[j + 1]))
        if mass.min(initial=0.0) < -band:
            raise NumericalValidationError(f"Negative conditional mass {mass.min():.3e} at step {j}")
        mass = np.clip(mass, 0.0, None)
        cumulative = np.cumsum(mass, axis=1)
        if cumulative[:, -1].min(initial=1.0) <= 0:
            raise NumericalValidationError(f"Vanishing conditional mass at step {j}")
        xs = draw_categorical(cumulative, rng.random(count))
        samples[:, j] = xs
        left = np.real(np.einsum("cd,cde->ce", left, np.moveaxis(site[:, xs, :], 1, 0)))
        left = left / mass[rows, xs][:, None]
    return samples


def reconstruct_twirled_mpo(mps):
    """Re-expand Pauli label legs into operator legs.

    Boundary bonds of size one are kept, so the result matches
    :func:`absorb_boundaries` applied to the locally twirled MPO.
    """
    p = pauli_tensor(mps.n)
    basis = mps.basis
    sites = []
    for a in mps.site_tensors:
        a = np.asarray(a, dtype=complex)
        if basis is not None:
            if a.shape[0] > 1:
                a = np.tensordot(basis, a, axes=([1], [0]))
            if a.shape[2] > 1:
                a = np.tensordot(a, basis.conj().T, axes=([2], [0]))
        sites.append(np.einsum("mxv,abx->mavb", a, p.array))
    one = np.ones(1, dtype=complex)
    return ProcessTensorMPO(tuple(sites), one, one, 2**mps.n)


def bond_ranks(mps, rtol=None):
    """Numerical rank of every bipartition of the trajectory-weight tensor."""
    if rtol is None:
        rtol = get_setting("RANK_RTOL", DEFAULT_SETTINGS["RANK_RTOL"])
    sites = mps.site_tensors
    # left sweep: the prefix matricisation equals Q @ lefts[j]
    lefts = []
    r = np.ones((1, 1))
    for site in sites[:-1]:
        m = np.tensordot(r, site, axes=([1], [0]))
        m = m.reshape(-1, site.shape[2])
        _, r = np.linalg.qr(m)
        lefts.append(r)
    rights = []
    r = np.ones((1, 1))
    for site in reversed(sites[1:]):
        m = np.tensordot(site, r, axes=([2], [0]))
        m = m.reshape(site.shape[0], -1)
        _, rt = np.linalg.qr(m.T)
        r = rt.T
        rights.insert(0, r)
    ranks = []
    for left, right in zip(lefts, rights):
        s = np.linalg.svd(left @ right, compute_uv=False)
        if s.size == 0 or s[0] == 0:
            ranks.append(0)
            continue
        ranks.append(int(np.sum(s > rtol * s[0])))
    return ranks


def _psd_eigen(matrix):
    eig = hermitian_eigen(matrix)
    band = get_setting("CLAMP_BAND", DEFAULT_SETTINGS["CLAMP_BAND"])
    if eig.eigenvalues[0] < -band:
        raise NumericalValidationError(f"Operator is not PSD, min eigenvalue {eig.eigenvalues[0]:.3e}")
    return np.clip(eig.eigenvalues, 0.0, None), eig.eigenvectors


def relative_entropy(rho, sigma):
    """Quantum relative entropy ``S(rho || sigma)`` in nats."""
    tol = get_setting("SUPPORT_TOL", DEFAULT_SETTINGS["SUPPORT_TOL"])
    mass_tol = get_setting("SUPPORT_MASS_TOL", DEFAULT_SETTINGS["SUPPORT_MASS_TOL"])
    p, u = _psd_eigen(rho)
    q, v = _psd_eigen(sigma)
    overlap = np.abs(u.conj().T @ v) ** 2
    flow = p @ overlap
    null = q <= tol
    if flow[null].sum() > mass_tol:
        return EntropyResult(math.inf, True)
    support = p > tol
    entropy = float(np.sum(p[support] * np.log(p[support])))
    cross = float(np.sum(flow[~null] * np.log(q[~null])))
    return EntropyResult(max(entropy - cross, 0.0))


def _require_unit_trace(choi):
    if choi.normalization != UNIT_TRACE:
        choi = choi.unit_trace()
    return choi


def markov_product(choi):
    """Tensor product of the single-slot marginals of a Choi operator."""
    dims = choi.dims
    registers = len(dims)
    product = np.ones((1, 1), dtype=complex)
    for slot in range(choi.slots + 1):
        keep = {2 * slot, 2 * slot + 1}
        marginal = partial_trace(choi.matrix, dims, set(range(registers)) - keep)
        product = np.kron(product, marginal)
    return choi.with_matrix(product)


def gqmi(choi):
    """Generalised quantum mutual information against the product of marginals."""
    choi = _require_unit_trace(choi)
    return relative_entropy(choi.matrix, markov_product(choi).matrix)


def twirl_rel_entropy(choi):
    """Relative entropy of a process with respect to its Pauli twirl."""
    choi = _require_unit_trace(choi)
    return relative_entropy(choi.matrix, dense_multi_time_twirl(choi).matrix)


WORKED_MODELS = ("heisenberg", "crx", "heisenberg_field")


def _heisenberg(theta):
    # environment first, system second
    return -theta / 2 * sum(np.kron(p, p) for p in PAULIS[1:])


def worked_hamiltonian(kind, theta, slots=1):
    """Single-qubit system coupled to a single-qubit environment in ``|+>``.

    Returns the dilation of ``slots + 1`` repeated steps of ``exp(-i H)``.
    """
    identity = PAULIS[0]
    if kind == "heisenberg":
        h = _heisenberg(theta)
    elif kind == "crx":
        h = -theta / 2 * (np.kron(identity, PAULIS[1]) - np.kron(PAULIS[3], PAULIS[1]))
    elif kind == "heisenberg_field":
        h = _heisenberg(np.pi / 2) - theta * np.kron(identity, PAULIS[1] + PAULIS[2] + PAULIS[3])
    else:
        raise ValueError(f"Unknown worked model {kind!r}, expected one of {WORKED_MODELS}")
    u = expm_hermitian(h)
    plus = np.full((2, 2), 0.5, dtype=complex)
    return SEDilation(2, 2, tuple([u] * (slots + 1)), plus)


def entropy_sweep(kind, thetas, slots=1):
    """Entropy diagnostics and trajectory probabilities over a coupling grid."""
    rows = []
    for theta in thetas:
        dilation = worked_hamiltonian(kind, theta, slots)
        mpo = build_mpo(dilation)
        choi = mpo_to_choi(mpo).unit_trace()
        twirled = dense_multi_time_twirl(choi)
        distribution = trajectory_distribution(spp_mps_from_mpo(mpo))
        rows.append(
            {
                "theta": float(theta),
                "gqmi": gqmi(choi),
                "gqmi_twirled": gqmi(twirled),
                "twirl_rel_entropy": relative_entropy(choi.matrix, twirled.matrix),
                "probabilities": distribution.probabilities,
            }
        )
        logger.debug(f"Entropy sweep {kind} theta={theta:.6f} done")
    return rows


def mps_to_json(mps):
    tensors = []
    for t in mps.site_tensors:
        if np.isrealobj(t):
            tensors.append(t.tolist())
        else:
            tensors.append(np.stack([t.real, t.imag], axis=-1).tolist())
    return {
        "n": mps.n,
        "k": mps.k,
        "bond_dims": mps.bond_dims,
        "complex": not mps.is_real,
        "site_tensors": tensors,
        "basis": None if mps.basis is None else np.stack([mps.basis.real, mps.basis.imag], -1).tolist(),
    }


def mps_from_json(document):
    if isinstance(document, str):
        document = json.loads(document)
    tensors = []
    for t in document["site_tensors"]:
        t = np.asarray(t, dtype=float)
        if document.get("complex"):
            t = t[..., 0] + 1j * t[..., 1]
        tensors.append(t)
    basis = document.get("basis")
    if basis is not None:
        basis = np.asarray(basis, dtype=float)
        basis = basis[..., 0] + 1j * basis[..., 1]
    mps = SppMps(tuple(tensors), int(document["n"]), basis)
    if mps.k != int(document["k"]):
        raise DimensionError("Site count does not match k")
    return mps


def samples_to_csv(samples, n, config=None):
    header = [f"t{j}" for j in range(samples.shape[1])]
    rows = ([pauli_label(int(x), n) for x in row] for row in samples)
    return render_csv(header, rows, config)
