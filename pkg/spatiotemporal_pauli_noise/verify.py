"""Oracle and property checks run by ``spp-noise verify``."""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from .circuit import apply_baseline_noise, build_detector_model, build_memory_circuit, sample_frames
from .conf import DEFAULT_SETTINGS, get_setting
from .correlation import covariance, covariance_spectral, spectral_summary, transfer_from_mps
from .decoder import MatchingDecoder, exhaustive_matching_weight
from .process import build_mpo, mpo_to_choi, random_dilation
from .qca import QcaParams, build_lattice, dense_micro_oracle
from .rng import stream
from .spp import (
    absorb_boundaries,
    bond_ranks,
    build_spp_mps,
    dense_multi_time_twirl,
    enumerate_weights,
    gqmi,
    reconstruct_twirled_mpo,
    spp_mps_from_mpo,
    trajectory_distribution,
    twirl_mpo_local,
    twirl_rel_entropy,
    worked_hamiltonian,
)
from .storm import StormParams, analytic_summary, error_profile, solve_params, storm_hmm
from .tableau import sample_tableau

logger = logging.getLogger(__name__)

MODES = ("quick", "full")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass
class VerificationReport:
    mode: str
    seed: int
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def as_dict(self):
        return {
            "mode": self.mode,
            "seed": self.seed,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail, "seconds": c.seconds}
                for c in self.checks
            ],
        }


def check_twirl_oracle(seed, full):
    """Dense twirl, local contraction and MPS reconstruction agree elementwise."""
    worst = 0.0
    count = 50 if full else 6
    rng = stream(seed, "verify", "twirl")
    for i in range(count):
        k = 1 + i % 3
        d_E = 2 if i % 2 == 0 else 4
        mpo = build_mpo(random_dilation(2, d_E, k, rng, mixed=bool(i % 3 == 0)))
        dense = dense_multi_time_twirl(mpo_to_choi(mpo)).matrix
        local = mpo_to_choi(absorb_boundaries(twirl_mpo_local(mpo))).matrix
        rebuilt = mpo_to_choi(reconstruct_twirled_mpo(spp_mps_from_mpo(mpo))).matrix
        worst = max(worst, np.abs(dense - local).max(), np.abs(dense - rebuilt).max())
    return worst < 1e-9, f"max deviation {worst:.3e} over {count} dilations"


def check_separability(seed, full):
    """Trajectory weights are non-negative, normalised, and bond ranks stay within d_E**2."""
    rng = stream(seed, "verify", "separability")
    problems = []
    count = 20 if full else 4
    for i in range(count):
        d_E = 2 if i % 2 == 0 else 4
        dilation = random_dilation(2, d_E, 2, rng)
        mps = build_spp_mps(dilation)
        weights = enumerate_weights(mps)
        if weights.min() < -1e-12 or abs(weights.sum() / mps.normalization - 1) > 1e-8:
            problems.append(f"weights min {weights.min():.3e} sum {weights.sum():.12f}")
        if max(bond_ranks(mps)) > d_E**2:
            problems.append(f"bond ranks {bond_ranks(mps)} exceed {d_E ** 2}")
    return not problems, "; ".join(problems) or f"{count} dilations separable"


def check_worked_examples(seed, full):
    """Closed-form trajectory distributions and entropies of the worked couplings."""
    problems = []
    uniform = trajectory_distribution(build_spp_mps(worked_hamiltonian("heisenberg", math.pi / 2)))
    if np.abs(uniform.probabilities - 1 / 16).max() > 1e-10:
        problems.append("heisenberg at pi/2 is not uniform")
    thetas = np.linspace(0.1, math.pi, 16 if full else 4)
    for theta in thetas:
        choi = mpo_to_choi(build_mpo(worked_hamiltonian("heisenberg", theta))).unit_trace()
        if gqmi(dense_multi_time_twirl(choi)).value > 1e-10:
            problems.append(f"twirled heisenberg GQMI non-zero at theta={theta:.4f}")
    crx = mpo_to_choi(build_mpo(worked_hamiltonian("crx", math.pi / 2))).unit_trace()
    value = gqmi(crx).value
    twirled = gqmi(dense_multi_time_twirl(crx)).value
    if twirl_rel_entropy(crx).value > 1e-10:
        problems.append("CRX process is not twirl invariant")
    support = trajectory_distribution(build_spp_mps(worked_hamiltonian("crx", math.pi / 2))).probabilities
    expected = np.zeros(16)
    expected[[0, 5]] = 0.5
    if np.abs(support - expected).max() > 1e-10:
        problems.append("CRX support differs from {II, XX}")
    if abs(value - math.log(2)) > 1e-9 or abs(twirled - math.log(2)) > 1e-9:
        problems.append(f"CRX GQMI {value:.12f} / {twirled:.12f} differ from ln 2")
    return not problems, "; ".join(problems) or "worked examples reproduced"


def check_storm(seed, full):
    """Closed-form storm spectra match eigensolves and the inverse map round-trips."""
    worst = 0.0
    grid = [(a, b) for a in (0.01, 0.05, 0.1, 0.2, 0.3) for b in (0.05, 0.1, 0.3, 0.5)]
    q0, q1 = error_profile(0.0), error_profile(0.03)
    for a, b in grid:
        if a + b >= 1:
            continue
        params = StormParams(a, b, q0, q1)
        numeric = spectral_summary(storm_hmm(params).transfer)
        worst = max(worst, abs(numeric.lambda_star - analytic_summary(params).lambda_star))
    for xi in np.linspace(1, 28, 20 if full else 5):
        params = solve_params(xi, 0.001)
        worst = max(worst, abs(analytic_summary(params).xi - xi) / xi)
    return worst < 1e-12, f"max deviation {worst:.3e}"


def check_covariance(seed, full):
    """Spectral expansion of the covariance agrees with matrix powers."""
    worst = 0.0
    models = [storm_hmm(StormParams(0.1, 0.3, error_profile(0.0), error_profile(0.03))).transfer]
    models.append(transfer_from_mps(build_spp_mps(worked_hamiltonian("heisenberg_field", 0.3, slots=3)), 1))
    taus = np.arange(1, 21)
    for t in models:
        summary = spectral_summary(t)
        spectral = covariance_spectral(t, "error", "error", taus, summary)
        direct = np.array([covariance(t, "error", "error", tau, summary) for tau in taus])
        worst = max(worst, np.abs(spectral - direct).max())
    return worst < 1e-9, f"max deviation {worst:.3e}"


def check_qca_oracle(seed, full):
    """The exact PCA matches the twirled coherent bath on tiny lattices."""
    rng = stream(seed, "verify", "qca")
    lattices = [build_lattice("path", 2, boundary="open")]
    if full:
        lattices += [
            build_lattice("path", 3, boundary="open"),
            build_lattice("rectangular", 2, 2, boundary="open"),
        ]
    draws = 20 if full else 3
    worst = residual = 0.0
    dephased = True
    for lattice in lattices:
        for _ in range(draws):
            n = rng.normal(size=3)
            n_vec = tuple(n / np.linalg.norm(n))
            params = QcaParams(rng.uniform(0, 0.5), rng.uniform(0, 0.5), rng.uniform(0, math.pi), n_vec)
            report = dense_micro_oracle(params, lattice, 3 if lattice.size <= 3 else 2)
            worst = max(worst, report.joint_tv)
            residual = max(residual, report.twirl_residual)
            dephased &= report.dephased
    return (
        worst < 1e-9 and residual < 1e-10 and dephased,
        f"max joint TV {worst:.3e}, twirl residual {residual:.3e}, dephased={dephased}",
    )


def check_decoder(seed, full):
    """Subset-DP matching weight equals the exhaustive minimum."""
    circuit = apply_baseline_noise(build_memory_circuit(3, 3), 0.001)
    decoder = MatchingDecoder(build_detector_model(circuit))
    rng = stream(seed, "verify", "decoder")
    samples = 2000 if full else 200
    worst = 0.0
    num = len(circuit.detectors)
    for _ in range(samples):
        size = int(rng.integers(1, 9))
        defects = sorted(rng.choice(num, size=size, replace=False).tolist())
        weight = decoder.match(defects)[0]
        worst = max(worst, abs(weight - exhaustive_matching_weight(decoder, defects)))
    return worst < 1e-9, f"max weight gap {worst:.3e} over {samples} syndromes"


def check_noiseless(seed, full):
    """Noiseless circuits produce no detector events and no logical flips."""
    problems = []
    for d in (3, 5) if full else (3,):
        for basis in ("Z", "X"):
            circuit = build_memory_circuit(d, 2, basis)
            detectors, observable = sample_frames(circuit, 100, stream(seed, "verify", "frame"))
            t_det, t_obs = sample_tableau(circuit, 3 if d == 3 else 1, stream(seed, "verify", "tableau"))
            if detectors.any() or observable.any() or t_det.any() or t_obs.any():
                problems.append(f"d={d} basis={basis}")
    return not problems, "noiseless events in " + ", ".join(problems) if problems else "no events"


def pattern_distance(first, second, min_count=None):
    """Total variation between the empirical laws of two sets of bit patterns.

    Rows of ``first`` and ``second`` are joint outcomes. Patterns seen fewer
    than ``min_count`` times over both samples share one bin. Returns
    ``(tv, floor)`` where ``floor`` is the expected distance between two
    samples of these sizes drawn from the pooled law.
    """
    if first.shape[1] != second.shape[1]:
        raise ValueError(f"Pattern widths differ: {first.shape[1]} and {second.shape[1]}")
    if min_count is None:
        min_count = get_setting("PATTERN_MIN_COUNT", DEFAULT_SETTINGS["PATTERN_MIN_COUNT"])
    n1, n2 = len(first), len(second)
    packed = np.packbits(np.concatenate([first, second]).astype(bool), axis=1)
    _, inverse = np.unique(packed, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    size = int(inverse.max()) + 1
    c1 = np.bincount(inverse[:n1], minlength=size)
    c2 = np.bincount(inverse[n1:], minlength=size)
    rare = c1 + c2 < min_count
    c1 = np.append(c1[~rare], c1[rare].sum())
    c2 = np.append(c2[~rare], c2[rare].sum())
    tv = 0.5 * float(np.abs(c1 / n1 - c2 / n2).sum())
    pooled = (c1 + c2) / (n1 + n2)
    spread = np.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    floor = 0.5 * math.sqrt(2 / math.pi) * float(spread.sum())
    return tv, floor


def detector_patterns(detectors, observable):
    return np.concatenate([detectors, observable[:, None]], axis=1)


def check_frame_against_tableau(seed, full):
    """Joint law of detector events and logical flips from frames matches Stim at d=3 over two rounds."""
    circuit = apply_baseline_noise(build_memory_circuit(3, 2), 0.001)
    shots = 100000 if full else 20000
    frame = detector_patterns(*sample_frames(circuit, shots, stream(seed, "verify", "frame-noise")))
    reference = detector_patterns(*sample_tableau(circuit, shots, stream(seed, "verify", "tableau-noise")))
    tv, floor = pattern_distance(frame, reference)
    tol = get_setting("PATTERN_TV_TOL", DEFAULT_SETTINGS["PATTERN_TV_TOL"])
    return tv - floor <= tol, f"pattern TV {tv:.4f}, sampling floor {floor:.4f} over {shots} shots"


CHECKS: List[Callable] = [
    check_twirl_oracle,
    check_separability,
    check_worked_examples,
    check_storm,
    check_covariance,
    check_qca_oracle,
    check_decoder,
    check_noiseless,
    check_frame_against_tableau,
]


def run_verification(mode="quick", seed=0):
    if mode not in MODES:
        raise ValueError(f"Unknown verification mode {mode!r}")
    full = mode == "full"
    report = VerificationReport(mode, seed)
    for check in CHECKS:
        started = time.perf_counter()
        try:
            passed, detail = check(seed, full)
        except Exception as e:
            logger.exception(f"Check {check.__name__} raised")
            passed, detail = False, f"{type(e).__name__}: {e}"
        elapsed = time.perf_counter() - started
        name = check.__name__[len("check_"):]
        logger.info(f"{name}: {'ok' if passed else 'FAILED'} ({detail}) in {elapsed:.1f}s")
        report.checks.append(CheckResult(name, bool(passed), detail, elapsed))
    return report
