"""Memory experiments under baseline circuit noise plus injected correlated faults."""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import get_version
from .circuit import apply_baseline_noise, build_detector_model, build_memory_circuit, sample_frames
from .conf import DEFAULT_SETTINGS, get_setting
from .decoder import MatchingDecoder
from .exceptions import InvalidParameterError
from .qca import QcaParams, estimate_marginal, run_cycles, surface_code_lattice
from .rng import draw_categorical, stream
from .storm import solve_params, sample_fault_stream, storm_hmm
from .utils import render_csv

logger = logging.getLogger(__name__)

NOISE_SOURCES = ("storm", "qca", "iid", "none")
GRID_NAMES = {"storm": "xi", "qca": "theta", "iid": "rate", "none": "point"}
CSV_COLUMNS = (
    "noise",
    "param",
    "value",
    "d",
    "rounds",
    "shots",
    "failures",
    "p_shot",
    "stderr",
    "p_round",
    "frac_shots_greedy_decoded",
    "marginal",
)


def per_round_rate(p_shot, rounds):
    """Per-round logical error rate from a per-shot failure probability."""
    if p_shot >= 0.5:
        return 0.5
    return (1 - (1 - 2 * p_shot) ** (1.0 / rounds)) / 2


def binomial_stderr(p, shots):
    return math.sqrt(p * (1 - p) / shots)


@dataclass(frozen=True)
class BenchmarkConfig:
    distances: Tuple[int, ...]
    shots: int
    seed: int
    noise: str = "storm"
    grid: Tuple[float, ...] = ()
    p: Optional[float] = None
    rounds_factor: Optional[int] = None
    basis: str = "Z"
    marginal: Optional[float] = None
    q1_budget: Optional[float] = None
    a: float = 1e-4
    b: float = 0.5
    n_vec: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    batch_size: Optional[int] = None

    def __post_init__(self):
        if self.noise not in NOISE_SOURCES:
            raise InvalidParameterError(
                f"Unknown noise source {self.noise!r}, expected one of {NOISE_SOURCES}"
            )
        if self.shots < 1:
            raise InvalidParameterError(f"shots={self.shots} must be positive")
        if self.seed is None:
            raise InvalidParameterError("A seed is required")
        if not self.distances:
            raise InvalidParameterError("At least one code distance is required")
        if self.noise != "none" and not self.grid:
            raise InvalidParameterError(f"Noise source {self.noise!r} needs a {GRID_NAMES[self.noise]} grid")
        object.__setattr__(self, "distances", tuple(int(d) for d in self.distances))
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        object.__setattr__(self, "n_vec", tuple(self.n_vec))
        defaults = {
            "p": get_setting("QEC_BASELINE_P", DEFAULT_SETTINGS["QEC_BASELINE_P"]),
            "rounds_factor": get_setting("QEC_ROUNDS_FACTOR", DEFAULT_SETTINGS["QEC_ROUNDS_FACTOR"]),
            "marginal": get_setting("QEC_BASELINE_P", DEFAULT_SETTINGS["QEC_BASELINE_P"]),
            "q1_budget": get_setting("STORM_Q1_BUDGET", DEFAULT_SETTINGS["STORM_Q1_BUDGET"]),
            "batch_size": get_setting("QEC_BATCH_SIZE", DEFAULT_SETTINGS["QEC_BATCH_SIZE"]),
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)

    @classmethod
    def from_dict(cls, data):
        fields = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        for name in ("distances", "grid", "n_vec"):
            if name in fields:
                fields[name] = tuple(fields[name])
        return cls(**fields)

    def as_dict(self):
        return asdict(self)

    def points(self):
        return list(self.grid) if self.noise != "none" else [0.0]


@dataclass
class BenchmarkReport:
    config: dict
    rows: List[dict] = field(default_factory=list)
    version: str = field(default_factory=get_version)
    wall_time: float = 0.0

    def to_csv(self):
        return render_csv(CSV_COLUMNS, ([row[c] for c in CSV_COLUMNS] for row in self.rows), self.config)

    def to_json(self):
        return {
            "config": self.config,
            "version": self.version,
            "wall_time": self.wall_time,
            "rows": self.rows,
        }


@dataclass(frozen=True)
class _Point:
    """One (grid value, distance) cell with everything a worker needs."""

    noise: str
    index: int
    value: float
    d: int
    rounds: int
    basis: str
    p: float
    marginal: Optional[Tuple[float, float, float, float]]
    storm: Optional[object] = None
    qca: Optional[object] = None


def _marginal_vector(rate):
    return (1.0 - rate, rate / 3, rate / 3, rate / 3)


def _prepare_point(config, index, value, d):
    rounds = config.rounds_factor * d
    storm = qca = None
    marginal = None
    if config.noise == "storm":
        storm = solve_params(value, config.marginal, q1_error_total=config.q1_budget)
        marginal = tuple(float(v) for v in storm.marginals)
    elif config.noise == "qca":
        qca = QcaParams(config.a, config.b, value * math.pi, config.n_vec)
        lattice = surface_code_lattice(d)
        marginal = tuple(float(v) for v in estimate_marginal(qca, lattice, config.seed))
    elif config.noise == "iid":
        marginal = _marginal_vector(value)
    return _Point(config.noise, index, value, d, rounds, config.basis, config.p, marginal, storm, qca)


_decoders = {}


def _circuit_and_decoder(point):
    key = (point.d, point.rounds, point.basis, point.p, point.marginal)
    if key not in _decoders:
        circuit = apply_baseline_noise(build_memory_circuit(point.d, point.rounds, point.basis), point.p)
        model = build_detector_model(circuit, point.marginal)
        _decoders.clear()
        _decoders[key] = (circuit, MatchingDecoder(model))
    return _decoders[key]


def sample_faults(point, qubits, shots, seed, batch):
    """Injected fault labels ``(shots, rounds, qubits)`` for one batch, ``None`` without injection."""
    key = (point.d, point.index, batch)
    if point.noise == "storm":
        return sample_fault_stream(storm_hmm(point.storm), qubits, point.rounds, seed, shots=shots, key=key)
    if point.noise == "qca":
        rng = stream(seed, "qca-shots", *key)
        faults, _ = run_cycles(point.qca, surface_code_lattice(point.d), point.rounds, rng, shots=shots)
        return faults
    if point.noise == "iid":
        rng = stream(seed, "iid", *key)
        cumulative = np.cumsum(point.marginal)
        return draw_categorical(cumulative, rng.random((shots, point.rounds, qubits))).astype(np.int8)
    return None


def run_batch(point, seed, batch, shots):
    """Failures and greedy-decoded count of one batch of shots."""
    circuit, decoder = _circuit_and_decoder(point)
    faults = sample_faults(point, circuit.qubits, shots, seed, batch)
    rng = stream(seed, "frame", point.d, point.index, batch)
    detectors, observable = sample_frames(circuit, shots, rng, faults)
    predicted, greedy = decoder.decode_batch(detectors)
    return int(np.count_nonzero(predicted != observable)), int(np.count_nonzero(greedy))


def run_point(point, shots, seed, batch_size, workers=1):
    batches = [(b, min(batch_size, shots - b * batch_size)) for b in range(math.ceil(shots / batch_size))]
    if workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_batch, *zip(*[(point, seed, b, n) for b, n in batches])))
    else:
        results = [run_batch(point, seed, b, n) for b, n in batches]
    failures = sum(r[0] for r in results)
    greedy = sum(r[1] for r in results)
    p_shot = failures / shots
    return {
        "noise": point.noise,
        "param": GRID_NAMES[point.noise],
        "value": point.value,
        "d": point.d,
        "rounds": point.rounds,
        "shots": shots,
        "failures": failures,
        "p_shot": p_shot,
        "stderr": binomial_stderr(p_shot, shots),
        "p_round": per_round_rate(p_shot, point.rounds),
        "frac_shots_greedy_decoded": greedy / shots,
        "marginal": None if point.marginal is None else 1.0 - point.marginal[0],
    }


def run_memory_benchmark(config, workers=None):
    """Logical failure statistics for every grid value and code distance."""
    if workers is None:
        workers = get_setting("WORKERS", DEFAULT_SETTINGS["WORKERS"])
    started = time.perf_counter()
    report = BenchmarkReport(config.as_dict())
    for index, value in enumerate(config.points()):
        for d in config.distances:
            point = _prepare_point(config, index, value, d)
            row = run_point(point, config.shots, config.seed, config.batch_size, workers)
            logger.info(
                f"{config.noise} {GRID_NAMES[config.noise]}={value} d={d}: "
                f"{row['failures']}/{row['shots']} failures, p_round={row['p_round']:.3e}"
            )
            report.rows.append(row)
    report.wall_time = time.perf_counter() - started
    return report
