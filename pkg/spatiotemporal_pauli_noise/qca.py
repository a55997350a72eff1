"""Lattice bath of two-level sites and its probabilistic cellular automaton.

Sites form a bipartite red/black lattice. One cycle applies an independent
storm flip to every site, flips every black site with probability
``sin(k theta)**2`` where ``k`` counts its excited red neighbours, then does the
same for red sites against the updated black sites. Excited sites emit a Pauli
fault on the qubit at the same position.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Optional, Tuple

import networkx as nx
import numpy as np
import scipy.stats

from .conf import DEFAULT_SETTINGS, get_setting
from .exceptions import DimensionError, InvalidParameterError
from .rng import draw_categorical, stream
from .tensor import kron_all
from .utils import PAULIS, conjugate_monomial, pauli_basis, pauli_monomial, render_csv

logger = logging.getLogger(__name__)

LAYOUTS = ("surface", "rectangular", "path")


@dataclass(frozen=True)
class Lattice:
    """Sites with coordinates, a red/black colouring and padded neighbour lists.

    ``neighbours[i]`` holds the neighbour indices of site ``i`` padded with
    ``size``, which indexes an always-unexcited ghost site.
    """

    coords: np.ndarray
    red: np.ndarray
    neighbours: np.ndarray
    layout: str

    def __post_init__(self):
        size = len(self.coords)
        for i in range(size):
            for j in self.neighbours[i]:
                if j < size and self.red[i] == self.red[j]:
                    raise InvalidParameterError(f"Sites {i} and {j} are neighbours of the same colour")

    @property
    def size(self):
        return len(self.coords)

    @property
    def black(self):
        return ~self.red

    def degree(self):
        return (self.neighbours < self.size).sum(axis=1)

    def excited_neighbours(self, state):
        """Number of excited neighbours of every site, vectorised over leading axes."""
        padded = np.concatenate([state, np.zeros(state.shape[:-1] + (1,), dtype=state.dtype)], axis=-1)
        return padded[..., self.neighbours].sum(axis=-1)


def _from_graph(graph, coords, red, layout):
    """Padded neighbour lists of ``graph``, whose nodes are the site coordinates."""
    size = len(coords)
    index = {c: i for i, c in enumerate(coords)}
    lists = [sorted(index[v] for v in graph.neighbors(c)) for c in coords]
    width = max((len(n) for n in lists), default=0)
    neighbours = np.full((size, max(width, 1)), size, dtype=np.intp)
    for i, n in enumerate(lists):
        neighbours[i, : len(n)] = n
    return Lattice(np.asarray(coords, dtype=int), np.asarray(red, dtype=bool), neighbours, layout)


def surface_code_sites(d):
    """Data and ancilla positions of a distance-``d`` rotated surface code.

    Data qubits sit at odd coordinates ``(x, y)`` in ``[1, 2d - 1]``, ancillas at
    even coordinates in ``[0, 2d]``. Returns ``(data, ancillas)`` where
    ``ancillas`` holds ``(x, y, basis)`` triples; data come first in qubit order.
    """
    if d < 3 or d % 2 == 0:
        raise InvalidParameterError(f"Code distance must be odd and at least 3, got {d}")
    data = [(x, y) for y in range(1, 2 * d, 2) for x in range(1, 2 * d, 2)]
    ancillas = []
    for y in range(0, 2 * d + 1, 2):
        for x in range(0, 2 * d + 1, 2):
            on_x_edge = x in (0, 2 * d)
            on_y_edge = y in (0, 2 * d)
            if on_x_edge and on_y_edge:
                continue
            basis = "X" if (x // 2 + y // 2) % 2 == 0 else "Z"
            if on_y_edge and basis != "X":
                continue
            if on_x_edge and basis != "Z":
                continue
            ancillas.append((x, y, basis))
    return data, ancillas


def surface_code_lattice(d):
    """Bath on the qubit sites of the rotated surface code; data red, ancillas black."""
    data, ancillas = surface_code_sites(d)
    coords = list(data) + [(x, y) for x, y, _ in ancillas]
    graph = nx.Graph()
    graph.add_nodes_from(coords)
    for x, y in data:
        for dx, dy in product((-1, 1), repeat=2):
            if (x + dx, y + dy) in graph:
                graph.add_edge((x, y), (x + dx, y + dy))
    red = [True] * len(data) + [False] * len(ancillas)
    return _from_graph(graph, coords, red, "surface")


def rectangular_lattice(width, height, periodic=False):
    if width < 1 or height < 1:
        raise InvalidParameterError(f"Invalid lattice size {width}x{height}")
    if periodic and (width % 2 or height % 2 or min(width, height) < 4):
        raise InvalidParameterError("Periodic rectangles need even sides of at least 4 to stay bipartite")
    graph = nx.grid_2d_graph(width, height, periodic=periodic)
    coords = [(x, y) for y in range(height) for x in range(width)]
    red = [(x + y) % 2 == 0 for x, y in coords]
    return _from_graph(graph, coords, red, "rectangular")


def path_lattice(n, periodic=False):
    if n < 1:
        raise InvalidParameterError(f"Invalid path length {n}")
    if periodic and (n % 2 or n < 4):
        raise InvalidParameterError("Periodic paths need an even length of at least 4")
    graph = nx.relabel_nodes(nx.cycle_graph(n) if periodic else nx.path_graph(n), lambda x: (x, 0))
    coords = [(x, 0) for x in range(n)]
    return _from_graph(graph, coords, [x % 2 == 0 for x in range(n)], "path")


def build_lattice(layout, *shape, boundary=None):
    """Construct a lattice by layout name: ``surface d``, ``rectangular w h`` or ``path n``."""
    if boundary is None:
        boundary = get_setting("QCA_BOUNDARY", DEFAULT_SETTINGS["QCA_BOUNDARY"])
    if boundary not in ("open", "periodic"):
        raise InvalidParameterError(f"Unknown boundary {boundary!r}")
    periodic = boundary == "periodic"
    if layout == "surface":
        if periodic:
            raise InvalidParameterError("The surface-code layout only supports open boundaries")
        return surface_code_lattice(*shape)
    if layout == "rectangular":
        return rectangular_lattice(*shape, periodic=periodic)
    if layout == "path":
        return path_lattice(*shape, periodic=periodic)
    raise InvalidParameterError(f"Unknown layout {layout!r}, expected one of {LAYOUTS}")


@dataclass(frozen=True)
class QcaParams:
    a: float
    b: float
    theta: float
    n_vec: Tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("a", "b"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParameterError(f"{name}={value} is not a probability")
        n_vec = tuple(float(v) for v in self.n_vec)
        if len(n_vec) != 3 or abs(sum(v * v for v in n_vec) - 1.0) > 1e-12:
            raise InvalidParameterError(f"n_vec={self.n_vec} must be a real unit 3-vector")
        object.__setattr__(self, "n_vec", n_vec)

    @property
    def emission(self):
        """Probabilities of X, Y, Z given an excited site."""
        return np.array(self.n_vec) ** 2

    def flip_table(self, max_degree):
        k = np.arange(max_degree + 1)
        return np.sin(k * self.theta) ** 2

    def as_dict(self):
        return {"a": self.a, "b": self.b, "theta": self.theta, "n_vec": list(self.n_vec)}


@dataclass(frozen=True)
class BathState:
    bits: np.ndarray

    @classmethod
    def zeros(cls, lattice, shots=None):
        shape = (lattice.size,) if shots is None else (shots, lattice.size)
        return cls(np.zeros(shape, dtype=np.int8))

    @property
    def density(self):
        return self.bits.mean(axis=-1)


def _half_step(state, flips, lattice, mask, uniforms):
    k = lattice.excited_neighbours(state)
    flip = (uniforms < flips[k]) & mask
    return state ^ flip.astype(state.dtype)


def _cycle(bits, params, lattice, flips, emission_cdf, uniforms):
    # storm
    u = uniforms[..., 0, :]
    up = (bits == 0) & (u < params.a)
    down = (bits == 1) & (u < params.b)
    bits = bits ^ (up | down).astype(bits.dtype)
    bits = _half_step(bits, flips, lattice, lattice.black, uniforms[..., 1, :])
    bits = _half_step(bits, flips, lattice, lattice.red, uniforms[..., 2, :])
    labels = (draw_categorical(emission_cdf, uniforms[..., 3, :]) + 1) * bits
    return bits, labels.astype(np.int8)


def pca_cycle(state, params, lattice, rng):
    """One bath cycle followed by emission, vectorised over leading axes of ``state.bits``.

    Returns the next state and Pauli labels (0=I, 1=X, 2=Y, 3=Z) per site.
    """
    bits = np.asarray(state.bits, dtype=np.int8)
    if bits.shape[-1] != lattice.size:
        raise DimensionError(f"Bath has {bits.shape[-1]} sites, lattice has {lattice.size}")
    flips = params.flip_table(lattice.neighbours.shape[1])
    emission_cdf = np.cumsum(params.emission)
    uniforms = rng.random(bits.shape[:-1] + (4, lattice.size))
    bits, labels = _cycle(bits, params, lattice, flips, emission_cdf, uniforms)
    return BathState(bits), labels


def run_cycles(params, lattice, cycles, rng, shots=None, initial=None):
    """Fault labels of shape ``(shots, cycles, sites)`` from an all-zero (or given) bath."""
    state = BathState.zeros(lattice, shots) if initial is None else initial
    out = np.empty(state.bits.shape[:-1] + (cycles, lattice.size), dtype=np.int8)
    for t in range(cycles):
        state, labels = pca_cycle(state, params, lattice, rng)
        out[..., t, :] = labels
    return out, state


def _trajectory_density(params, lattice, cycles, burn_in, seed, index, chunk):
    rng = stream(seed, "qca", index)
    flips = params.flip_table(lattice.neighbours.shape[1])
    emission_cdf = np.cumsum(params.emission)
    bits = np.zeros(lattice.size, dtype=np.int8)
    eta = np.empty(cycles - burn_in)
    t = 0
    while t < cycles:
        block = min(chunk, cycles - t)
        uniforms = rng.random((block, 4, lattice.size))
        for u in uniforms:
            bits, _ = _cycle(bits, params, lattice, flips, emission_cdf, u)
            if t >= burn_in:
                eta[t - burn_in] = bits.mean()
            t += 1
    return eta


def autocorrelation(series, max_lag):
    """Normalised autocorrelation of a 1-D series up to ``max_lag``; ``None`` for a constant series."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    n = x.size
    spectrum = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(spectrum * spectrum.conj(), 2 * n)[: min(max_lag, n - 1) + 1] / n
    if acov[0] <= 0:
        return None
    return acov / acov[0]


def fit_correlation_length(corr, cutoff=None):
    """Least-squares fit of ``log C(tau)`` over the leading window where ``C > cutoff``.

    Returns ``(xi, r_squared)``; both ``None`` when fewer than two points qualify
    or the fitted slope is not negative.
    """
    if corr is None:
        return None, None
    if cutoff is None:
        cutoff = get_setting("QCA_FIT_CUTOFF", DEFAULT_SETTINGS["QCA_FIT_CUTOFF"])
    below = np.nonzero(corr <= cutoff)[0]
    end = below[0] if below.size else corr.size
    if end < 2:
        return None, None
    taus = np.arange(end)
    fit = scipy.stats.linregress(taus, np.log(corr[:end]))
    if not fit.slope < 0:
        return None, None
    return float(-1.0 / fit.slope), float(fit.rvalue**2)


@dataclass(frozen=True)
class DensitySeries:
    """Global excitation density per cycle, one row per trajectory."""

    eta: np.ndarray
    sites: int
    autocorrelation: Optional[np.ndarray]
    xi: Optional[float]
    r_squared: Optional[float]

    @property
    def mean(self):
        return float(self.eta.mean())

    @property
    def scaled_variance(self):
        return float(self.sites * self.eta.var(axis=1).mean())

    def summary(self):
        return {
            "mean_eta": self.mean,
            "scaled_variance": self.scaled_variance,
            "xi_eta": self.xi,
            "r_squared": self.r_squared,
        }


def run_series(params, lattice, cycles, burn_in, seed, trajectories=None, workers=None, max_lag=None):
    """Density statistics over independent trajectories after a burn-in."""
    if cycles <= burn_in:
        raise InvalidParameterError(f"cycles={cycles} must exceed burn_in={burn_in}")
    if trajectories is None:
        trajectories = get_setting("QCA_TRAJECTORIES", DEFAULT_SETTINGS["QCA_TRAJECTORIES"])
    if workers is None:
        workers = get_setting("WORKERS", DEFAULT_SETTINGS["WORKERS"])
    if max_lag is None:
        max_lag = get_setting("QCA_MAX_LAG", DEFAULT_SETTINGS["QCA_MAX_LAG"])
    chunk = get_setting("QCA_CHUNK", DEFAULT_SETTINGS["QCA_CHUNK"])
    args = [(params, lattice, cycles, burn_in, seed, i, chunk) for i in range(trajectories)]
    if workers > 1 and trajectories > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_trajectory_density, *zip(*args)))
    else:
        rows = [_trajectory_density(*a) for a in args]
    eta = np.stack(rows)
    curves = [c for c in (autocorrelation(row, max_lag) for row in eta) if c is not None]
    corr = np.mean(curves, axis=0) if curves else None
    xi, r_squared = fit_correlation_length(corr)
    if xi is None:
        logger.info(f"Correlation length not fittable at theta={params.theta:.6f}")
    logger.debug(f"QCA series theta={params.theta:.6f} mean density {eta.mean():.3e}")
    return DensitySeries(eta, lattice.size, corr, xi, r_squared)


def density_dump_csv(series, config=None):
    header = ["cycle"] + [f"eta_{i}" for i in range(series.eta.shape[0])]
    rows = ([t] + list(column) for t, column in enumerate(series.eta.T))
    return render_csv(header, rows, config)


def estimate_marginal(params, lattice, seed, cycles=None):
    """Per-site per-cycle probabilities of I, X, Y, Z averaged over a bath run from all zeros."""
    if cycles is None:
        cycles = get_setting("QCA_MARGINAL_CYCLES", DEFAULT_SETTINGS["QCA_MARGINAL_CYCLES"])
    chunk = get_setting("QCA_CHUNK", DEFAULT_SETTINGS["QCA_CHUNK"])
    eta = _trajectory_density(params, lattice, cycles, 0, seed, 0, chunk)
    excited = float(eta.mean())
    return np.concatenate([[1.0 - excited], excited * params.emission])


# exact kernels on tiny lattices


def _check_tiny(lattice, cycles):
    max_sites = get_setting("QCA_ORACLE_MAX_SITES", DEFAULT_SETTINGS["QCA_ORACLE_MAX_SITES"])
    max_cycles = get_setting("QCA_ORACLE_MAX_CYCLES", DEFAULT_SETTINGS["QCA_ORACLE_MAX_CYCLES"])
    if lattice.size > max_sites:
        raise DimensionError(f"Lattice of {lattice.size} sites exceeds the exact limit {max_sites}")
    if cycles > max_cycles:
        raise DimensionError(f"{cycles} cycles exceed the exact limit {max_cycles}")


def _configurations(size):
    # site 0 is the most significant bit
    return np.array(list(product((0, 1), repeat=size)), dtype=np.int8)


def _half_step_matrix(params, lattice, mask):
    configs = _configurations(lattice.size)
    flips = params.flip_table(lattice.neighbours.shape[1])
    p = flips[lattice.excited_neighbours(configs)] * mask
    # kernel[s, s'] = prod_i (p_i if s'_i != s_i else 1 - p_i), with p_i = 0 off the mask
    changed = configs[:, None, :] != configs[None, :, :]
    factors = np.where(changed, p[:, None, :], 1.0 - p[:, None, :])
    return factors.prod(axis=-1)


def storm_matrix(params, size):
    single = np.array([[1.0 - params.a, params.a], [params.b, 1.0 - params.b]])
    return kron_all(*([single] * size))


def pca_transition_matrix(params, lattice):
    """Exact bath kernel ``M[s, s']`` of one cycle on a tiny lattice."""
    _check_tiny(lattice, 0)
    return (
        storm_matrix(params, lattice.size)
        @ _half_step_matrix(params, lattice, lattice.black)
        @ _half_step_matrix(params, lattice, lattice.red)
    )


def pca_emission_kernel(params, size):
    """``E[s, x]``: probability of the Pauli string ``x`` given bath configuration ``s``."""
    single = np.zeros((2, 4))
    single[0, 0] = 1.0
    single[1, 1:] = params.emission
    return kron_all(*([single] * size))


def kernel_joint(kernel, initial, cycles):
    """Dense joint table over ``(s_1, x_1, ..., s_T, x_T)`` of a label-emitting bath kernel.

    ``kernel[s, s', x]`` is the probability of moving from ``s`` to ``s'`` and
    emitting the Pauli string ``x``; the first cycle is the most significant index.
    """
    states, _, labels = kernel.shape
    cap = get_setting("DENSE_DIM_CAP", DEFAULT_SETTINGS["DENSE_DIM_CAP"])
    if (states * labels) ** cycles > cap:
        raise DimensionError(f"Joint table of size {(states * labels) ** cycles} exceeds cap {cap}")
    flat = kernel.reshape(states, states * labels)
    dist = flat[initial]
    for _ in range(cycles - 1):
        last = (np.arange(dist.size) % flat.shape[1]) // labels
        dist = (dist[:, None] * flat[last]).reshape(-1)
    return dist


def joint_total_variation(q_kernel, p_kernel, initial, cycles, tol=None):
    """Total variation between the trajectory laws of two label-emitting bath kernels.

    Paths are expanded only through transitions where either kernel exceeds
    ``tol``. The mass of skipped transitions is added to the result, so the
    returned value never understates the distance.
    """
    if tol is None:
        tol = get_setting("SUPPORT_TOL", DEFAULT_SETTINGS["SUPPORT_TOL"])
    states, _, labels = q_kernel.shape
    q_flat = q_kernel.reshape(states, -1)
    p_flat = p_kernel.reshape(states, -1)
    keep = (q_flat > tol) | (p_flat > tol)
    skipped_q = np.where(keep, 0.0, np.abs(q_flat)).sum(axis=1)
    skipped_p = np.where(keep, 0.0, np.abs(p_flat)).sum(axis=1)
    last, q, p = np.array([initial]), np.ones(1), np.ones(1)
    skipped = 0.0
    for _ in range(cycles):
        parts = []
        for s in np.unique(last):
            rows = last == s
            cols = np.nonzero(keep[s])[0]
            skipped += 0.5 * (q[rows].sum() * skipped_q[s] + p[rows].sum() * skipped_p[s])
            parts.append(
                (
                    np.tile(cols // labels, rows.sum()),
                    (q[rows][:, None] * q_flat[s, cols]).reshape(-1),
                    (p[rows][:, None] * p_flat[s, cols]).reshape(-1),
                )
            )
        last, q, p = (np.concatenate(column) for column in zip(*parts))
    return 0.5 * float(np.abs(q - p).sum()) + float(skipped)


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def hilbert_schmidt_check(v0, v1, tol=1e-12):
    """``Tr(V_k V_l^dag) == 2 delta_kl`` for the two branch unitaries."""
    ops = (np.asarray(v0, dtype=complex), np.asarray(v1, dtype=complex))
    for k in range(2):
        for l in range(2):
            expected = 2.0 if k == l else 0.0
            if abs(np.trace(ops[k] @ ops[l].conj().T) - expected) > tol:
                return False
    return True


def branch_unitaries(params, v1=None):
    v0 = PAULIS[0]
    if v1 is None:
        v1 = sum(c * p for c, p in zip(params.n_vec, PAULIS[1:]))
    return v0, np.asarray(v1, dtype=complex)


@dataclass(frozen=True)
class OracleReport:
    joint_tv: float
    bath_tv: float
    max_offdiagonal: float
    twirl_residual: float
    dephased: bool
    hilbert_schmidt: bool
    kernel_quantum: np.ndarray
    kernel_pca: np.ndarray
    initial: int
    cycles: int

    def joint(self):
        """Quantum and PCA joint distributions, only for very small systems."""
        return (
            kernel_joint(self.kernel_quantum, self.initial, self.cycles),
            kernel_joint(self.kernel_pca, self.initial, self.cycles),
        )


def _embed(op, site, size):
    factors = [PAULIS[0]] * size
    factors[site] = op
    return kron_all(*factors)


def _controlled_rotation(control, target, theta, size):
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    rotation = math.cos(theta) * PAULIS[0] - 1j * math.sin(theta) * PAULIS[1]
    left = [PAULIS[0]] * size
    right = [PAULIS[0]] * size
    left[control] = p0
    right[control] = p1
    right[target] = rotation
    return kron_all(*left) + kron_all(*right)


def _coherent_half_step(params, lattice, controls_red):
    size = lattice.size
    u = np.eye(2**size, dtype=complex)
    for i in range(size):
        if lattice.red[i] != controls_red:
            continue
        for j in lattice.neighbours[i]:
            if j < size:
                u = _controlled_rotation(i, j, params.theta, size) @ u
    return u


def _storm_kraus(params, size):
    a, b = params.a, params.b
    single = [
        np.array([[0, 0], [math.sqrt(a), 0]]),
        np.array([[math.sqrt(1 - a), 0], [0, 0]]),
        np.array([[0, math.sqrt(b)], [0, 0]]),
        np.array([[0, 0], [0, math.sqrt(1 - b)]]),
    ]
    return [[_embed(k, i, size) for k in single] for i in range(size)]


def branch_coupling(v0, v1, size):
    """System-bath unitary ``prod_i (|0><0|_i V_0 + |1><1|_i V_1)``, bath factors first."""
    projectors = (np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex))
    u = np.eye(4**size, dtype=complex)
    for i in range(size):
        term = np.zeros_like(u)
        for projector, v in zip(projectors, (v0, v1)):
            bath = [PAULIS[0]] * size
            system = [PAULIS[0]] * size
            bath[i] = projector
            system[i] = v
            term += kron_all(*bath, *system)
        u = term @ u
    return u


def label_instrument(coupling, size):
    """Bath operators ``K_x`` with ``coupling = sum_x K_x (x) P_x`` over system Pauli strings."""
    d = 2**size
    u = coupling.reshape(d, d, d, d)
    # K_x = Tr_S[(1 (x) P_x) U] / d
    return np.einsum("xij,ajbi->xab", pauli_basis(size), u, optimize=True) / d


def twirl_residual(coupling, instrument, bath_state, size):
    """Largest deviation of the group-averaged system twirl from the label instrument.

    Checks the Pauli expansion of the coupling, then averages the coupled
    state over all ``4**size`` system Paulis and compares with the
    instrument's diagonal form. The system starts maximally mixed, which the
    twirl leaves invariant.
    """
    d = 2**size
    basis = pauli_basis(size)
    expansion = sum(np.kron(k, p) for k, p in zip(instrument, basis))
    worst = float(np.abs(expansion - coupling).max())
    coupled = coupling @ np.kron(bath_state, np.eye(d) / d) @ coupling.conj().T
    averaged = np.zeros_like(coupled)
    offsets = (np.arange(d) * d)[:, None]
    for digits in product(range(4), repeat=size):
        perm, phase = pauli_monomial(digits)
        averaged += conjugate_monomial(coupled, (offsets + perm).reshape(-1), np.tile(phase, d))
    averaged /= 4**size
    reduced = np.einsum("xab,bc,xdc->ad", instrument, bath_state, instrument.conj(), optimize=True)
    return max(worst, float(np.abs(averaged - np.kron(reduced, np.eye(d) / d)).max()))


def _offdiagonal(rho):
    return float(np.abs(rho - np.diag(np.diag(rho))).max())


def dense_micro_oracle(params, lattice, cycles, initial=0, v1=None):
    """Exact joint law of bath trajectories and emitted Pauli strings from a dense system-bath simulation.

    Each cycle applies the storm Kraus maps and the coherent black then red
    controlled rotations to the bath, then couples every site to its system
    qubit through the branch unitaries. The Pauli-twirled coupling resolves
    into bath operators tagged by the Pauli string left on the system; the
    bath is read out in the computational basis after every cycle, which does
    not disturb it once it has dephased. The result is compared with the PCA
    over the full joint law.
    """
    _check_tiny(lattice, cycles)
    size = lattice.size
    dim = 2**size
    v0, v1 = branch_unitaries(params, v1)
    hs_ok = hilbert_schmidt_check(v0, v1)
    kraus = _storm_kraus(params, size)
    coherent = _coherent_half_step(params, lattice, False) @ _coherent_half_step(params, lattice, True)
    coupling = branch_coupling(v0, v1, size)
    instrument = label_instrument(coupling, size)

    def bath_update(rho):
        for site_ops in kraus:
            rho = sum(k @ rho @ k.conj().T for k in site_ops)
        return coherent @ rho @ coherent.conj().T

    def basis_state(s):
        rho = np.zeros((dim, dim), dtype=complex)
        rho[s, s] = 1.0
        return rho

    kernel = np.empty((dim, dim, 4**size))
    max_off = 0.0
    for s in range(dim):
        branches = np.einsum(
            "xab,bc,xdc->xad", instrument, bath_update(basis_state(s)), instrument.conj(), optimize=True
        )
        kernel[s] = np.real(np.diagonal(branches, axis1=1, axis2=2)).T
        max_off = max(max_off, _offdiagonal(branches.sum(axis=0)))
    # the unconditioned bath must stay diagonal after every cycle
    rho = basis_state(initial)
    for _ in range(cycles):
        rho = np.einsum("xab,bc,xdc->ad", instrument, bath_update(rho), instrument.conj(), optimize=True)
        max_off = max(max_off, _offdiagonal(rho))
    residual = twirl_residual(coupling, instrument, bath_update(basis_state(initial)), size)

    transition = pca_transition_matrix(params, lattice)
    pca = transition[:, :, None] * pca_emission_kernel(params, size)[None, :, :]
    bath_q = bath_trajectories(kernel.sum(axis=2), initial, cycles)
    bath_p = bath_trajectories(transition, initial, cycles)
    dephased = max_off < 1e-12
    if not dephased:
        logger.warning(f"Bath keeps coherences up to {max_off:.3e}")
    return OracleReport(
        joint_tv=joint_total_variation(kernel, pca, initial, cycles),
        bath_tv=total_variation(bath_q, bath_p),
        max_offdiagonal=max_off,
        twirl_residual=residual,
        dephased=dephased,
        hilbert_schmidt=hs_ok,
        kernel_quantum=kernel,
        kernel_pca=pca,
        initial=initial,
        cycles=cycles,
    )


def bath_trajectories(kernel, initial, cycles):
    """Probabilities of ``(s_1, ..., s_T)`` from configuration index ``initial``, lexicographic in time."""
    dist = kernel[initial]
    for _ in range(cycles - 1):
        last = np.arange(dist.size) % kernel.shape[0]
        dist = (dist[:, None] * kernel[last]).reshape(-1)
    return dist
