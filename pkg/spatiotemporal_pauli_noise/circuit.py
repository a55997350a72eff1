"""Rotated surface-code memory circuits and Pauli-frame simulation.

A circuit is a flat list of operations in the spirit of stabilizer circuit
formats: resets, Hadamards, CNOT layers, measurements, noise channels and one
``ROUND_START`` slot per round where externally sampled faults are composed.
"""

import logging
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Dict, List, Tuple

import numpy as np

from .exceptions import DetectorModelError, DimensionError, InvalidParameterError
from .qca import surface_code_sites

logger = logging.getLogger(__name__)

GATES = ("R", "RX", "H", "CX", "M", "MX", "ROUND_START")
NOISE = ("DEPOLARIZE1", "DEPOLARIZE2", "X_ERROR", "Z_ERROR")

# CNOT partner offsets per layer
X_SCHEDULE = ((-1, -1), (1, -1), (-1, 1), (1, 1))
Z_SCHEDULE = ((-1, -1), (-1, 1), (1, -1), (1, 1))

# two-qubit Paulis as (x0, z0, x1, z1) excluding the identity
_TWO_QUBIT_PAULIS = np.array(
    [bits for bits in product((0, 1), repeat=4) if any(bits)], dtype=bool
)
_ONE_QUBIT_PAULIS = np.array([(1, 0), (1, 1), (0, 1)], dtype=bool)  # X, Y, Z


@dataclass(frozen=True)
class Operation:
    name: str
    targets: Tuple[int, ...]
    arg: float = 0.0


@dataclass(frozen=True)
class Detector:
    records: Tuple[int, ...]
    basis: str
    coords: Tuple[int, int, int]


@dataclass(frozen=True)
class SurfaceCodeCircuit:
    distance: int
    rounds: int
    basis: str
    operations: Tuple[Operation, ...]
    detectors: Tuple[Detector, ...]
    observable: Tuple[int, ...]
    coords: Tuple[Tuple[int, int], ...]
    data: Tuple[int, ...]
    ancillas: Tuple[int, ...]
    ancilla_basis: Dict[int, str] = field(default_factory=dict)
    measurements: int = 0

    @property
    def qubits(self):
        return len(self.coords)

    @property
    def noisy(self):
        return any(op.name in NOISE for op in self.operations)


def build_memory_circuit(d, rounds, basis="Z"):
    """Memory experiment on a distance-``d`` rotated surface code.

    Data qubits are prepared in the ``basis`` eigenstate, ``rounds`` rounds of
    stabilizer measurement follow, and the data are measured in ``basis``.
    """
    if basis not in ("Z", "X"):
        raise InvalidParameterError(f"Memory basis must be Z or X, got {basis!r}")
    if rounds < 1:
        raise InvalidParameterError(f"rounds={rounds} must be at least 1")
    data_coords, ancilla_specs = surface_code_sites(d)
    coords = tuple(data_coords) + tuple((x, y) for x, y, _ in ancilla_specs)
    index = {c: i for i, c in enumerate(coords)}
    data = tuple(range(len(data_coords)))
    ancillas = tuple(range(len(data_coords), len(coords)))
    kinds = {q: spec[2] for q, spec in zip(ancillas, ancilla_specs)}
    x_ancillas = tuple(q for q in ancillas if kinds[q] == "X")

    layers = []
    for step in range(4):
        pairs = []
        for q in ancillas:
            x, y = coords[q]
            dx, dy = (X_SCHEDULE if kinds[q] == "X" else Z_SCHEDULE)[step]
            partner = index.get((x + dx, y + dy))
            if partner is None:
                continue
            pairs.extend((q, partner) if kinds[q] == "X" else (partner, q))
        layers.append(tuple(pairs))
    support = {}
    for q in ancillas:
        x, y = coords[q]
        neighbours = ((x + dx, y + dy) for dx, dy in X_SCHEDULE)
        support[q] = tuple(index[c] for c in neighbours if c in index)

    ops = [Operation("R" if basis == "Z" else "RX", data), Operation("R", ancillas)]
    detectors = []
    record = 0
    previous = {}
    for r in range(rounds):
        ops.append(Operation("ROUND_START", tuple(range(len(coords))), r))
        ops.append(Operation("H", x_ancillas))
        ops.extend(Operation("CX", layer) for layer in layers)
        ops.append(Operation("H", x_ancillas))
        ops.append(Operation("M", ancillas))
        current = {q: record + i for i, q in enumerate(ancillas)}
        record += len(ancillas)
        for q in ancillas:
            x, y = coords[q]
            if r == 0:
                if kinds[q] == basis:
                    detectors.append(Detector((current[q],), kinds[q], (x, y, r)))
            else:
                detectors.append(Detector((current[q], previous[q]), kinds[q], (x, y, r)))
        previous = current
        if r + 1 < rounds:
            ops.append(Operation("R", ancillas))
    ops.append(Operation("M" if basis == "Z" else "MX", data))
    final = {q: record + i for i, q in enumerate(data)}
    record += len(data)
    for q in ancillas:
        if kinds[q] != basis:
            continue
        x, y = coords[q]
        records = tuple(final[p] for p in support[q]) + (previous[q],)
        detectors.append(Detector(records, basis, (x, y, rounds)))
    if basis == "Z":
        line = [q for q in data if coords[q][1] == 1]
    else:
        line = [q for q in data if coords[q][0] == 1]
    return SurfaceCodeCircuit(
        distance=d,
        rounds=rounds,
        basis=basis,
        operations=tuple(ops),
        detectors=tuple(detectors),
        observable=tuple(final[q] for q in line),
        coords=coords,
        data=data,
        ancillas=ancillas,
        ancilla_basis=kinds,
        measurements=record,
    )


def expected_detector_count(d, rounds):
    half = (d * d - 1) // 2
    return half * (rounds + 1) + half * (rounds - 1)


def apply_baseline_noise(circuit, p):
    """Insert circuit-level noise of strength ``p`` around every operation."""
    if not 0.0 <= p < 0.5:
        raise InvalidParameterError(f"Baseline error rate {p} must lie in [0, 0.5)")
    if p == 0:
        return circuit
    ops = []
    for op in circuit.operations:
        if op.name == "M":
            ops.append(Operation("X_ERROR", op.targets, p))
        elif op.name == "MX":
            ops.append(Operation("Z_ERROR", op.targets, p))
        ops.append(op)
        if op.name == "R":
            ops.append(Operation("X_ERROR", op.targets, p))
        elif op.name == "RX":
            ops.append(Operation("Z_ERROR", op.targets, p))
        elif op.name == "H":
            ops.append(Operation("DEPOLARIZE1", op.targets, p))
        elif op.name == "CX":
            ops.append(Operation("DEPOLARIZE2", op.targets, p))
        elif op.name == "ROUND_START":
            ops.append(Operation("DEPOLARIZE1", circuit.data, p))
    return replace(circuit, operations=tuple(ops))


class PauliFrame:
    """X and Z flip bits of shape ``(shots, qubits)`` relative to the noiseless reference."""

    def __init__(self, shots, qubits):
        self.x = np.zeros((shots, qubits), dtype=bool)
        self.z = np.zeros((shots, qubits), dtype=bool)

    def apply_labels(self, labels, qubits=None):
        """Compose Pauli labels (0=I, 1=X, 2=Y, 3=Z) onto the frame."""
        labels = np.asarray(labels)
        cols = slice(None) if qubits is None else list(qubits)
        self.x[:, cols] ^= (labels == 1) | (labels == 2)
        self.z[:, cols] ^= (labels == 2) | (labels == 3)

    def h(self, targets):
        t = list(targets)
        self.x[:, t], self.z[:, t] = self.z[:, t].copy(), self.x[:, t].copy()

    def cx(self, targets):
        controls, tgts = list(targets[0::2]), list(targets[1::2])
        self.x[:, tgts] ^= self.x[:, controls]
        self.z[:, controls] ^= self.z[:, tgts]

    def reset(self, targets):
        t = list(targets)
        self.x[:, t] = False
        self.z[:, t] = False

    def measure(self, targets, basis="Z"):
        t = list(targets)
        return (self.x if basis == "Z" else self.z)[:, t].copy()


def _sample_noise(frame, op, rng):
    shots = frame.x.shape[0]
    if op.name in ("X_ERROR", "Z_ERROR"):
        hit = rng.random((shots, len(op.targets))) < op.arg
        (frame.x if op.name == "X_ERROR" else frame.z)[:, list(op.targets)] ^= hit
    elif op.name == "DEPOLARIZE1":
        t = list(op.targets)
        hit = rng.random((shots, len(t))) < op.arg
        which = _ONE_QUBIT_PAULIS[rng.integers(0, 3, size=(shots, len(t)))]
        frame.x[:, t] ^= hit & which[..., 0]
        frame.z[:, t] ^= hit & which[..., 1]
    elif op.name == "DEPOLARIZE2":
        controls, tgts = list(op.targets[0::2]), list(op.targets[1::2])
        hit = rng.random((shots, len(controls))) < op.arg
        which = _TWO_QUBIT_PAULIS[rng.integers(0, 15, size=(shots, len(controls)))]
        frame.x[:, controls] ^= hit & which[..., 0]
        frame.z[:, controls] ^= hit & which[..., 1]
        frame.x[:, tgts] ^= hit & which[..., 2]
        frame.z[:, tgts] ^= hit & which[..., 3]


def _run_frame(circuit, frame, on_noise, faults=None):
    """Propagate a frame through the circuit, returning measurement flips of shape ``(shots, records)``."""
    records = []
    for position, op in enumerate(circuit.operations):
        name = op.name
        if name == "R" or name == "RX":
            frame.reset(op.targets)
        elif name == "H":
            frame.h(op.targets)
        elif name == "CX":
            frame.cx(op.targets)
        elif name == "M":
            records.append(frame.measure(op.targets, "Z"))
        elif name == "MX":
            records.append(frame.measure(op.targets, "X"))
        elif name == "ROUND_START":
            if faults is not None:
                frame.apply_labels(faults[:, int(op.arg), :])
        on_noise(position, op, frame)
    return np.concatenate(records, axis=1)


def detector_flips(circuit, flips):
    detectors = np.zeros((flips.shape[0], len(circuit.detectors)), dtype=bool)
    for i, det in enumerate(circuit.detectors):
        detectors[:, i] = np.logical_xor.reduce(flips[:, list(det.records)], axis=1)
    observable = np.logical_xor.reduce(flips[:, list(circuit.observable)], axis=1)
    return detectors, observable


def sample_frames(circuit, shots, rng, faults=None):
    """Sample detector events and logical flips.

    ``faults`` holds injected Pauli labels of shape ``(shots, rounds, qubits)``
    composed at the start of each round.
    """
    if faults is not None and faults.shape != (shots, circuit.rounds, circuit.qubits):
        raise DimensionError(
            f"Faults of shape {faults.shape} do not match {(shots, circuit.rounds, circuit.qubits)}"
        )
    frame = PauliFrame(shots, circuit.qubits)

    def on_noise(position, op, frame):
        if op.name in NOISE:
            _sample_noise(frame, op, rng)

    flips = _run_frame(circuit, frame, on_noise, faults)
    return detector_flips(circuit, flips)


# detector error model


@dataclass(frozen=True)
class FaultMechanism:
    position: int
    qubits: Tuple[int, ...]
    paulis: Tuple[Tuple[bool, bool], ...]
    probability: float


@dataclass(frozen=True)
class DetectorModel:
    """Graph-like error model: edges between detectors or to the boundary node ``num_detectors``."""

    num_detectors: int
    edges: Dict[Tuple[int, int], Tuple[float, bool]]
    detector_basis: Tuple[str, ...]
    coords: Tuple[Tuple[int, int, int], ...] = ()

    @property
    def boundary(self):
        return self.num_detectors

    def detector_marginals(self):
        """Firing probability of every detector under independent edges."""
        keep = np.ones(self.num_detectors + 1)
        for (u, v), (p, _) in self.edges.items():
            for node in (u, v):
                keep[node] *= 1 - 2 * p
        return (1 - keep[: self.num_detectors]) / 2


def combine(p1, p2):
    return p1 * (1 - p2) + p2 * (1 - p1)


def _mechanisms(circuit, spp_marginal=None):
    mechanisms = []
    for position, op in enumerate(circuit.operations):
        if op.name == "X_ERROR" and op.arg > 0:
            mechanisms += [FaultMechanism(position, (q,), ((True, False),), op.arg) for q in op.targets]
        elif op.name == "Z_ERROR" and op.arg > 0:
            mechanisms += [FaultMechanism(position, (q,), ((False, True),), op.arg) for q in op.targets]
        elif op.name == "DEPOLARIZE1" and op.arg > 0:
            for q in op.targets:
                for x, z in _ONE_QUBIT_PAULIS:
                    mechanisms.append(FaultMechanism(position, (q,), ((bool(x), bool(z)),), op.arg / 3))
        elif op.name == "DEPOLARIZE2" and op.arg > 0:
            for c, t in zip(op.targets[0::2], op.targets[1::2]):
                for x0, z0, x1, z1 in _TWO_QUBIT_PAULIS:
                    paulis = ((bool(x0), bool(z0)), (bool(x1), bool(z1)))
                    mechanisms.append(FaultMechanism(position, (c, t), paulis, op.arg / 15))
        elif op.name == "ROUND_START" and spp_marginal is not None:
            for q in op.targets:
                for label, (x, z) in zip((1, 2, 3), _ONE_QUBIT_PAULIS):
                    if spp_marginal[label] > 0:
                        mechanisms.append(
                            FaultMechanism(position, (q,), ((bool(x), bool(z)),), float(spp_marginal[label]))
                        )
    return mechanisms


def build_detector_model(circuit, spp_marginal=None):
    """Propagate every independent fault location to its detectors and logical effect.

    ``spp_marginal`` gives per-round per-qubit probabilities of (I, X, Y, Z) for
    the injected faults, entered as independent channels at every round start.
    """
    mechanisms = _mechanisms(circuit, spp_marginal)
    basis = tuple(det.basis for det in circuit.detectors)
    model_edges = {}
    coords = tuple(d.coords for d in circuit.detectors)
    if not mechanisms:
        return DetectorModel(len(circuit.detectors), model_edges, basis, coords)
    by_position = {}
    for row, m in enumerate(mechanisms):
        by_position.setdefault(m.position, []).append(row)
    frame = PauliFrame(len(mechanisms), circuit.qubits)

    def on_noise(position, op, frame):
        for row in by_position.get(position, ()):
            m = mechanisms[row]
            for q, (x, z) in zip(m.qubits, m.paulis):
                frame.x[row, q] ^= x
                frame.z[row, q] ^= z

    flips = _run_frame(circuit, frame, on_noise)
    detectors, observable = detector_flips(circuit, flips)
    boundary = len(circuit.detectors)
    basis_arr = np.array(basis)
    for row, m in enumerate(mechanisms):
        fired = np.nonzero(detectors[row])[0]
        for kind in ("X", "Z"):
            part = [int(i) for i in fired if basis_arr[i] == kind]
            flip = bool(observable[row]) and kind == circuit.basis
            if len(part) > 2:
                raise DetectorModelError(
                    f"Fault at operation {m.position} on qubits {m.qubits} fires {len(part)} {kind} detectors"
                )
            if not part:
                if flip:
                    logger.warning(f"Undetectable logical fault at operation {m.position} on {m.qubits}")
                continue
            key = (part[0], part[1]) if len(part) == 2 else (part[0], boundary)
            key = tuple(sorted(key))
            if key in model_edges:
                p_old, flip_old = model_edges[key]
                if flip_old != flip:
                    logger.warning(f"Edge {key} has conflicting observable effects, keeping the likelier")
                    flip = flip if m.probability > p_old else flip_old
                model_edges[key] = (combine(p_old, m.probability), flip)
            else:
                model_edges[key] = (m.probability, flip)
    return DetectorModel(boundary, model_edges, basis, coords)


def memory_circuit(d, rounds=None, basis="Z", p=0.0, rounds_factor=3):
    circuit = build_memory_circuit(d, rounds if rounds is not None else rounds_factor * d, basis)
    return apply_baseline_noise(circuit, p)


def logical_line(circuit) -> List[int]:
    """Data qubits of the logical operator measured by the observable."""
    offset = circuit.measurements - len(circuit.data)
    return [r - offset for r in circuit.observable]

