"""Process tensors built from system-environment dilations.

A dilation is a sequence of ``k + 1`` joint unitaries on ``H_E (x) H_S``
together with an initial environment state. Its process tensor is held as a
temporal matrix product operator whose site tensors are the reordered, fused
and transposed superoperators of the joint unitaries, or densely as a Choi
operator on ``in_0, out_0, ..., in_k, out_k``.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.stats import unitary_group

from .conf import DEFAULT_SETTINGS, get_setting
from .exceptions import DimensionError, NumericalValidationError
from .tensor import (
    devectorize,
    hermitian_eigen,
    is_hermitian,
    is_unitary,
    partial_trace,
    rft_transform,
    superoperator,
    vectorize,
)
from .utils import pauli_expectations, qubit_count

logger = logging.getLogger(__name__)

UNNORMALIZED = "unnormalized"
UNIT_TRACE = "unit-trace"


@dataclass(frozen=True)
class SEDilation:
    """Joint unitaries on environment (first) and system (second)."""

    d_S: int
    d_E: int
    unitaries: Tuple[np.ndarray, ...]
    env_init: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "unitaries", tuple(np.asarray(u, dtype=complex) for u in self.unitaries))
        object.__setattr__(self, "env_init", np.asarray(self.env_init, dtype=complex))
        qubit_count(self.d_S)
        if self.d_E < 1:
            raise DimensionError(f"Environment dimension must be positive, got {self.d_E}")
        if not self.unitaries:
            raise DimensionError("A dilation needs at least one unitary")
        dim = self.d_S * self.d_E
        for j, u in enumerate(self.unitaries):
            if u.shape != (dim, dim):
                raise DimensionError(f"Unitary {j} has shape {u.shape}, expected {(dim, dim)}")
            if not is_unitary(u):
                raise NumericalValidationError(f"Unitary {j} is not unitary within tolerance")
        sigma = self.env_init
        if sigma.shape != (self.d_E, self.d_E):
            raise DimensionError(f"env_init has shape {sigma.shape}, expected {(self.d_E, self.d_E)}")
        if not is_hermitian(sigma) or abs(np.trace(sigma) - 1) > 1e-12:
            raise NumericalValidationError("env_init must be Hermitian with unit trace")
        if hermitian_eigen(sigma).eigenvalues[0] < -1e-12:
            raise NumericalValidationError("env_init is not positive semidefinite")

    @property
    def k(self):
        return len(self.unitaries) - 1

    @property
    def n(self):
        return qubit_count(self.d_S)


@dataclass(frozen=True)
class ProcessTensorMPO:
    """Temporal MPO with site legs ``(mu_j, alpha_j, mu_{j+1}, beta_j)``."""

    site_tensors: Tuple[np.ndarray, ...]
    sigma: np.ndarray
    trace: np.ndarray
    d_S: int

    @property
    def k(self):
        return len(self.site_tensors) - 1

    @property
    def n(self):
        return qubit_count(self.d_S)

    @property
    def bond_dims(self):
        dims = [self.site_tensors[0].shape[0]]
        dims += [t.shape[2] for t in self.site_tensors]
        return dims


@dataclass(frozen=True)
class ChoiOperator:
    matrix: np.ndarray
    slots: int
    qubits: int
    normalization: str = UNNORMALIZED

    def __post_init__(self):
        if self.normalization not in (UNNORMALIZED, UNIT_TRACE):
            raise ValueError(f"Unknown normalization {self.normalization!r}")
        dim = 4 ** (self.qubits * (self.slots + 1))
        if self.matrix.shape != (dim, dim):
            raise DimensionError(f"Choi shape {self.matrix.shape} does not match {dim}")

    @property
    def d_S(self):
        return 2**self.qubits

    @property
    def dims(self):
        """Subsystem dimensions in ``in_0, out_0, ..., in_k, out_k`` order."""
        return [self.d_S] * (2 * (self.slots + 1))

    @property
    def expected_trace(self):
        if self.normalization == UNIT_TRACE:
            return 1.0
        return float(4 ** (self.qubits * (self.slots + 1)))

    def unit_trace(self):
        trace = np.trace(self.matrix).real
        if trace <= 0:
            raise NumericalValidationError(f"Choi trace {trace} is not positive")
        return ChoiOperator(self.matrix / trace, self.slots, self.qubits, UNIT_TRACE)

    def with_matrix(self, matrix):
        return ChoiOperator(matrix, self.slots, self.qubits, self.normalization)


@dataclass(frozen=True)
class CausalityReport:
    max_violation: float
    trace_deviation: float
    constraint_count: int
    per_slot: List[float] = field(default_factory=list)

    @property
    def causal(self):
        return self.max_violation <= get_setting("CAUSALITY_TOL", DEFAULT_SETTINGS["CAUSALITY_TOL"])


@dataclass(frozen=True)
class PositivityReport:
    min_eigenvalue: float

    @property
    def positive(self):
        return self.min_eigenvalue >= -get_setting("CP_TOL", DEFAULT_SETTINGS["CP_TOL"])


def build_mpo(dilation):
    """Build the temporal MPO of a dilation."""
    dims = [dilation.d_E, dilation.d_S]
    sites = tuple(rft_transform(superoperator(u), dims) for u in dilation.unitaries)
    sigma = vectorize(dilation.env_init)
    trace = vectorize(np.eye(dilation.d_E, dtype=complex))
    return ProcessTensorMPO(sites, sigma, trace, dilation.d_S)


def _dense_cap_check(d_S, k):
    cap = get_setting("DENSE_DIM_CAP", DEFAULT_SETTINGS["DENSE_DIM_CAP"])
    dim = (d_S * d_S) ** (k + 1)
    if dim > cap:
        raise DimensionError(f"Dense Choi dimension {dim} exceeds cap {cap}")
    return dim


def contract_mpo(mpo):
    """Contract all bonds; returns a tensor with legs ``(alpha_0, beta_0, ..., alpha_k, beta_k)``."""
    left = mpo.sigma.reshape(-1)
    for site in mpo.site_tensors:
        # left[..., mu] x site[mu, alpha, nu, beta] -> left[..., alpha, beta, nu]
        left = np.tensordot(left, site, axes=([-1], [0]))
        left = np.moveaxis(left, -2, -1)
    return np.tensordot(left, mpo.trace, axes=([-1], [0]))


def mpo_to_choi(mpo):
    """Dense Choi operator with trace ``4**(n(k+1))`` for a trace-preserving process."""
    d, k = mpo.d_S, mpo.k
    _dense_cap_check(d, k)
    t = contract_mpo(mpo)
    legs = 2 * (k + 1)
    t = t.reshape([d] * (2 * legs))
    # fused leg l splits into (bra, ket) at axes (2l, 2l + 1)
    kets = [2 * leg + 1 for leg in range(legs)]
    bras = [2 * leg for leg in range(legs)]
    dim = d**legs
    matrix = t.transpose(kets + bras).reshape(dim, dim) * d ** (k + 1)
    return ChoiOperator(matrix, k, mpo.n)


def _check_instrument(superop, d_S, index):
    superop = np.asarray(superop, dtype=complex)
    if superop.shape != (d_S**2, d_S**2):
        raise DimensionError(f"Instrument {index} has shape {superop.shape}, expected {(d_S**2, d_S**2)}")
    t = superop.reshape(d_S, d_S, d_S, d_S)
    # choi[(a, b), (a', b')] = superop[(b', b), (a', a)]
    choi = t.transpose(3, 1, 2, 0).reshape(d_S**2, d_S**2)
    tol = get_setting("CP_TOL", DEFAULT_SETTINGS["CP_TOL"])
    if hermitian_eigen(choi).eigenvalues[0] < -tol:
        raise NumericalValidationError(f"Instrument {index} is not completely positive")
    return superop


def apply_instruments(mpo, rho_in, instruments):
    """Output state of the process for an input state and ``k`` instruments."""
    d = mpo.d_S
    rho_in = np.asarray(rho_in, dtype=complex)
    if rho_in.shape != (d, d):
        raise DimensionError(f"Input state has shape {rho_in.shape}, expected {(d, d)}")
    if len(instruments) != mpo.k:
        raise DimensionError(f"Expected {mpo.k} instruments, got {len(instruments)}")
    instruments = [_check_instrument(a, d, j) for j, a in enumerate(instruments)]
    state = np.outer(mpo.sigma, vectorize(rho_in))
    for j, site in enumerate(mpo.site_tensors):
        out = np.tensordot(state, site, axes=([0, 1], [0, 1]))
        if j < mpo.k:
            # the RFT image of a single-subsystem superoperator is its transpose
            state = out @ instruments[j].T
        else:
            state = out
    return devectorize(mpo.trace @ state)


def apply_instruments_dense(dilation, rho_in, instruments):
    """Reference for :func:`apply_instruments` by joint density-matrix evolution."""
    d_E, d_S = dilation.d_E, dilation.d_S
    rho = np.kron(dilation.env_init, np.asarray(rho_in, dtype=complex))
    for j, u in enumerate(dilation.unitaries):
        rho = u @ rho @ u.conj().T
        if j < dilation.k:
            t = rho.reshape(d_E, d_S, d_E, d_S)
            a = np.asarray(instruments[j], dtype=complex).reshape(d_S, d_S, d_S, d_S)
            # a[(t', t), (s', s)] acts on the (bra, ket) system indices
            t = np.einsum("wvrs,esfr->evfw", a, t)
            rho = t.reshape(d_E * d_S, d_E * d_S)
    return partial_trace(rho, [d_E, d_S], {0})


def dense_choi(dilation):
    """Choi operator assembled from Bell-pair inputs into every slot.

    Each slot receives one half of an unnormalised Bell pair; the system output
    of every step is kept as the ``out`` register.
    """
    d_S, d_E, k = dilation.d_S, dilation.d_E, dilation.k
    dim = _dense_cap_check(d_S, k)
    eig = hermitian_eigen(dilation.env_init)
    bell = np.eye(d_S, dtype=complex)
    choi = np.zeros((dim, dim), dtype=complex)
    for weight, env in zip(eig.eigenvalues, eig.eigenvectors.T):
        if weight <= 1e-15:
            continue
        # axes: (E, S, registers...) with registers in_0, out_0, in_1, ...
        psi = np.einsum("e,si->esi", env, bell)
        for j, u in enumerate(dilation.unitaries):
            shape = psi.shape
            psi = (u @ psi.reshape(d_E * d_S, -1)).reshape(shape)
            # system wire becomes out_j
            psi = np.moveaxis(psi, 1, -1)
            if j < k:
                psi = np.einsum("e...,si->es...i", psi, bell)
        psi = psi.reshape(d_E, dim)
        choi += weight * psi.T @ psi.conj()
    return ChoiOperator(choi * d_S ** (k + 1), k, dilation.n)


def check_causality(choi):
    """Evaluate the causal Pauli-expectation constraints of a Choi operator.

    For every slot ``j`` and non-identity Pauli ``Q`` on ``in_j`` all
    expectations of ``P (x) Q (x) I`` with ``I`` on ``out_j`` and every later
    register must vanish, for arbitrary Paulis ``P`` on earlier registers.
    """
    d, k, n = choi.d_S, choi.slots, choi.qubits
    matrix = choi.matrix
    dims = choi.dims
    per_slot = []
    count = 0
    for j in range(k + 1):
        # keep registers 0 .. in_j, trace out_j and everything later
        reduced = partial_trace(matrix, dims, set(range(2 * j + 1, len(dims))))
        expectations = pauli_expectations(reduced, n * (2 * j + 1))
        table = expectations.reshape(4 ** (2 * n * j), 4**n)
        violations = np.abs(table[:, 1:])
        count += violations.size
        per_slot.append(float(violations.max(initial=0.0)))
        logger.debug(f"Slot {j}: {violations.size} causal constraints")
    trace_deviation = abs(np.trace(matrix).real - choi.expected_trace)
    max_violation = max(per_slot + [trace_deviation])
    return CausalityReport(max_violation, trace_deviation, count + 1, per_slot)


def check_positivity(choi):
    matrix = choi.matrix if isinstance(choi, ChoiOperator) else np.asarray(choi)
    return PositivityReport(float(hermitian_eigen(matrix).eigenvalues[0]))


def markovian_dilation(step_unitaries, env_states):
    """Dilation whose steps each couple the system to a fresh environment register.

    ``step_unitaries[j]`` acts on ``E_j (x) S``; the joint environment is the
    tensor product of all registers.
    """
    if len(step_unitaries) != len(env_states):
        raise DimensionError("Need one environment state per step")
    env_states = [np.asarray(s, dtype=complex) for s in env_states]
    env_dims = [s.shape[0] for s in env_states]
    step_unitaries = [np.asarray(u, dtype=complex) for u in step_unitaries]
    d_S = step_unitaries[0].shape[0] // env_dims[0]
    d_E = int(np.prod(env_dims))
    unitaries = []
    for j, u in enumerate(step_unitaries):
        before = int(np.prod(env_dims[:j]))
        after = int(np.prod(env_dims[j + 1 :]))
        # u on (E_j, S); reorder to (E_<j, E_j, E_>j, S)
        t = u.reshape(env_dims[j], d_S, env_dims[j], d_S)
        full = np.einsum("ab,cd,esft->aecsbfdt", np.eye(before), np.eye(after), t)
        unitaries.append(full.reshape(d_E * d_S, d_E * d_S))
    sigma = np.ones((1, 1), dtype=complex)
    for s in env_states:
        sigma = np.kron(sigma, s)
    return SEDilation(d_S, d_E, tuple(unitaries), sigma)


def random_dilation(d_S, d_E, k, rng, mixed=False):
    """Haar-random joint unitaries with a random (pure or mixed) environment state."""
    dim = d_S * d_E
    unitaries = tuple(unitary_group.rvs(dim, random_state=rng) for _ in range(k + 1))
    if mixed:
        g = rng.normal(size=(d_E, d_E)) + 1j * rng.normal(size=(d_E, d_E))
        sigma = g @ g.conj().T
    else:
        v = rng.normal(size=d_E) + 1j * rng.normal(size=d_E)
        sigma = np.outer(v, v.conj())
    sigma = sigma / np.trace(sigma)
    return SEDilation(d_S, d_E, unitaries, sigma)


def channel_choi(superop):
    """Choi operator (one slot, trace ``4**n``) of a single-step superoperator."""
    superop = np.asarray(superop, dtype=complex)
    d = int(round(np.sqrt(superop.shape[0])))
    t = superop.reshape(d, d, d, d)
    matrix = t.transpose(3, 1, 2, 0).reshape(d * d, d * d) * d
    return ChoiOperator(matrix, 0, qubit_count(d))


def _complex_matrix(data):
    data = np.asarray(data, dtype=float)
    if data.shape[-1] != 2:
        raise DimensionError("Complex entries must be given as [real, imag] pairs")
    return data[..., 0] + 1j * data[..., 1]


def load_dilation(source):
    """Load a dilation from a JSON document or path.

    The schema is ``{"d_S": int, "d_E": int, "env_init": M, "unitaries": [M, ...]}``
    where every matrix ``M`` is a row-major nested list of ``[real, imag]`` pairs.
    """
    if isinstance(source, (str, bytes)) and not str(source).lstrip().startswith("{"):
        with open(source, encoding="utf-8") as f:
            document = json.load(f)
    elif isinstance(source, dict):
        document = source
    else:
        document = json.loads(source)
    try:
        d_S, d_E = int(document["d_S"]), int(document["d_E"])
        sigma = _complex_matrix(document["env_init"]).reshape(d_E, d_E)
        unitaries = tuple(
            _complex_matrix(u).reshape(d_S * d_E, d_S * d_E) for u in document["unitaries"]
        )
    except (KeyError, ValueError, TypeError) as e:
        raise DimensionError(f"Invalid dilation document: {e}") from e
    return SEDilation(d_S, d_E, unitaries, sigma)


def dump_dilation(dilation):
    def pairs(m):
        return np.stack([m.real, m.imag], axis=-1).tolist()

    return {
        "d_S": dilation.d_S,
        "d_E": dilation.d_E,
        "env_init": pairs(dilation.env_init),
        "unitaries": [pairs(u) for u in dilation.unitaries],
    }
