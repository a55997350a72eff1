"""Two-state storm model.

Each qubit couples to its own calm/storm chain. Every round the chain makes a
transition and the qubit then suffers a Pauli fault drawn from the emission
distribution of the new state, so the label matrices are
``A_x = T diag(q0[x], q1[x])``.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .conf import DEFAULT_SETTINGS, get_setting
from .correlation import (
    SpectralSummary,
    TransferOperator,
    empirical_covariance,
    hmm_check,
    non_normality,
    observable,
)
from .exceptions import InvalidParameterError, NumericalValidationError
from .rng import draw_categorical, stream
from .spp import SppMps

logger = logging.getLogger(__name__)

DISTRIBUTION_TOL = 1e-12


def _distribution(values, name):
    values = np.asarray(values, dtype=float)
    if values.shape != (4,):
        raise InvalidParameterError(f"{name} must have four entries (I, X, Y, Z), got {values.shape}")
    if values.min() < -DISTRIBUTION_TOL or abs(values.sum() - 1) > DISTRIBUTION_TOL:
        raise InvalidParameterError(f"{name}={values.tolist()} is not a probability distribution")
    values = np.clip(values, 0.0, None)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class StormParams:
    a: float
    b: float
    q0: np.ndarray
    q1: np.ndarray

    def __post_init__(self):
        for name in ("a", "b"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParameterError(f"{name}={value} is not a probability")
        total = self.a + self.b
        if total <= 0.0:
            raise InvalidParameterError("a + b must be positive for a unique stationary state")
        if total >= 1.0:
            raise InvalidParameterError(f"a + b = {total} must be below 1")
        object.__setattr__(self, "q0", _distribution(self.q0, "q0"))
        object.__setattr__(self, "q1", _distribution(self.q1, "q1"))

    @property
    def stationary(self):
        total = self.a + self.b
        return np.array([self.b / total, self.a / total])

    @property
    def lambda_two(self):
        return 1.0 - self.a - self.b

    @property
    def marginals(self):
        """Stationary per-round Pauli frequencies ``(b q0 + a q1) / (a + b)``."""
        return (self.b * self.q0 + self.a * self.q1) / (self.a + self.b)

    def as_dict(self):
        return {"a": self.a, "b": self.b, "q0": self.q0.tolist(), "q1": self.q1.tolist()}


def error_profile(q_error_total, split=None):
    """Emission distribution with total error ``q_error_total`` split over X, Y, Z."""
    if split is None:
        split = np.full(3, 1.0 / 3.0)
    split = np.asarray(split, dtype=float)
    if split.shape != (3,) or split.min() < 0 or abs(split.sum() - 1) > DISTRIBUTION_TOL:
        raise InvalidParameterError(f"Pauli split {split.tolist()} must be three weights summing to 1")
    if not 0.0 <= q_error_total <= 1.0:
        raise InvalidParameterError(f"Error total {q_error_total} is not a probability")
    return np.concatenate([[1.0 - q_error_total], q_error_total * split])


@dataclass(frozen=True)
class StormHmm:
    params: StormParams
    transition: np.ndarray
    kernels: Tuple[np.ndarray, ...]

    @property
    def stationary(self):
        return self.params.stationary

    @property
    def transfer(self):
        return TransferOperator(self.kernels)

    @property
    def emissions(self):
        """Emission table of shape ``(2, 4)``."""
        return np.stack([self.params.q0, self.params.q1])

    def to_mps(self, rounds):
        """Trajectory-weight MPS of ``rounds`` consecutive single-qubit steps."""
        if rounds < 1:
            raise InvalidParameterError(f"rounds={rounds} must be at least 1")
        stack = np.stack(self.kernels, axis=1)  # (s, x, s')
        ones = np.ones(2)
        pi = self.stationary
        if rounds == 1:
            return SppMps((np.einsum("s,sxt,t->x", pi, stack, ones)[None, :, None],), 1)
        first = np.einsum("s,sxt->xt", pi, stack)[None]
        last = (stack @ ones)[:, :, None]
        return SppMps((first,) + (stack,) * (rounds - 2) + (last,), 1)


def storm_hmm(params):
    """Assemble transition and label matrices of the storm model."""
    a, b = params.a, params.b
    transition = np.array([[1.0 - a, a], [b, 1.0 - b]])
    kernels = tuple(transition @ np.diag([params.q0[x], params.q1[x]]) for x in range(4))
    hmm = StormHmm(params, transition, kernels)
    check = hmm_check(kernels)
    if not check.is_hmm:
        raise NumericalValidationError(f"Storm label matrices fail the HMM check: {check.violations}")
    residue = np.abs(params.stationary @ transition - params.stationary).max()
    if residue > DISTRIBUTION_TOL:
        raise NumericalValidationError(f"Stationary state residue {residue:.3e}")
    return hmm


def analytic_summary(params):
    """Closed-form spectral summary: ``lambda_2 = 1 - a - b``, gap ``a + b``."""
    lam = params.lambda_two
    transition = np.array([[1.0 - params.a, params.a], [params.b, 1.0 - params.b]])
    return SpectralSummary(
        eigenvalues=np.array([1.0, lam]),
        lambda_star=abs(lam),
        gap=params.a + params.b,
        xi=0.0 if lam == 0 else -1.0 / math.log(abs(lam)),
        left=params.stationary,
        right=np.ones(2),
        ergodic=True,
        unit_eigenvalues=[1.0 + 0.0j],
        non_normality=non_normality(transition),
    )


def analytic_covariance(params, f, g, tau):
    """``pi0 pi1 (F1 - F0)(G1 - G0) lambda_2**tau`` with ``F_s = sum_x q_s[x] f(x)``."""
    if tau < 1:
        raise ValueError(f"Lag must be at least 1, got {tau}")
    f, g = observable(f), observable(g)
    pi0, pi1 = params.stationary
    df = params.q1 @ f - params.q0 @ f
    dg = params.q1 @ g - params.q0 @ g
    return pi0 * pi1 * df * dg * params.lambda_two**tau


def solve_params(xi_target, marginal_total, q0_error_total=0.0, q1_error_total=None, split=None):
    """Storm parameters with correlation length ``xi_target`` and marginal error rate ``marginal_total``.

    The calm and storm error totals are fixed inputs; the two chain rates are
    solved from the gap ``1 - exp(-1/xi)`` and the stationary storm fraction.
    """
    if q1_error_total is None:
        q1_error_total = get_setting("STORM_Q1_BUDGET", DEFAULT_SETTINGS["STORM_Q1_BUDGET"])
    min_xi = get_setting("STORM_MIN_XI", DEFAULT_SETTINGS["STORM_MIN_XI"])
    if not xi_target >= min_xi:
        raise InvalidParameterError(f"xi={xi_target} is below the minimum correlation length {min_xi}")
    if not 0.0 < marginal_total < 1.0:
        raise InvalidParameterError(f"marginal_total={marginal_total} must lie in (0, 1)")
    if q1_error_total <= q0_error_total:
        raise InvalidParameterError(
            f"Storm error total {q1_error_total} must exceed calm error total {q0_error_total}"
        )
    gap = 1.0 - math.exp(-1.0 / xi_target)
    pi1 = (marginal_total - q0_error_total) / (q1_error_total - q0_error_total)
    if not 0.0 <= pi1 <= 1.0:
        raise InvalidParameterError(
            f"Storm fraction {pi1} outside [0, 1]: marginal {marginal_total} not between "
            f"{q0_error_total} and {q1_error_total}"
        )
    params = StormParams(
        a=gap * pi1,
        b=gap * (1.0 - pi1),
        q0=error_profile(q0_error_total, split),
        q1=error_profile(q1_error_total, split),
    )
    summary = analytic_summary(params)
    total = 1.0 - params.marginals[0]
    if not math.isclose(summary.xi, xi_target, rel_tol=1e-12, abs_tol=1e-12) or not math.isclose(
        total, marginal_total, rel_tol=1e-12, abs_tol=1e-12
    ):
        raise NumericalValidationError(
            f"Forward check failed: xi {summary.xi} vs {xi_target}, marginal {total} vs {marginal_total}"
        )
    logger.debug(f"Storm parameters for xi={xi_target}: a={params.a:.6g} b={params.b:.6g}")
    return params


def sample_fault_stream(hmm, qubits, rounds, seed, shots=1, key=()):
    """Pauli labels of shape ``(shots, rounds, qubits)``.

    Qubit ``q`` draws from its own stream ``(seed, "storm", *key, q)``, so any
    subset of qubits regenerates identically.
    """
    emission_cdf = np.cumsum(hmm.emissions, axis=1)
    transition_cdf = np.cumsum(hmm.transition, axis=1)
    start_cdf = np.cumsum(hmm.stationary)
    out = np.empty((shots, rounds, qubits), dtype=np.int8)
    for q in range(qubits):
        rng = stream(seed, "storm", *key, q)
        state = draw_categorical(start_cdf, rng.random(shots))
        uniforms = rng.random((rounds, 2, shots))
        for r in range(rounds):
            state = draw_categorical(transition_cdf[state], uniforms[r, 0])
            out[:, r, q] = draw_categorical(emission_cdf[state], uniforms[r, 1])
    return out


def storm_diagnostics(params, rounds, seed, chains=1, lag=1, f="error"):
    """Analytic against sampled marginal error rate and lag covariance for one parameter set."""
    hmm = storm_hmm(params)
    summary = analytic_summary(params)
    labels = sample_fault_stream(hmm, 1, rounds, seed, shots=chains)[:, :, 0]
    values = observable(f)[labels]
    mean = float(values.mean())
    cov, cov_err = empirical_covariance(values, values, lag)
    expected_mean = float(params.marginals @ observable(f))
    return {
        "a": params.a,
        "b": params.b,
        "lambda_two": params.lambda_two,
        "gap": summary.gap,
        "xi": summary.xi,
        "marginal": expected_mean,
        "marginal_empirical": mean,
        "marginal_stderr": math.sqrt(max(expected_mean * (1 - expected_mean), 0.0) / values.size),
        "covariance": analytic_covariance(params, f, f, lag),
        "covariance_empirical": cov,
        "covariance_stderr": cov_err,
    }


def parse_storm(assignments, q0: Optional[np.ndarray] = None, q1: Optional[np.ndarray] = None):
    """Parse ``["a=0.1", "b=0.3"]`` into storm parameters.

    Emission distributions default to an error-free calm state and the
    configured storm error budget split uniformly.
    """
    values = {}
    for item in assignments:
        name, sep, value = item.partition("=")
        if not sep or name not in ("a", "b", "q0", "q1"):
            raise InvalidParameterError(f"Cannot parse storm parameter {item!r}")
        values[name] = [float(v) for v in value.split(",")] if name in ("q0", "q1") else float(value)
    if "a" not in values or "b" not in values:
        raise InvalidParameterError("Storm parameters need both a and b")
    budget = get_setting("STORM_Q1_BUDGET", DEFAULT_SETTINGS["STORM_Q1_BUDGET"])
    return StormParams(
        a=values["a"],
        b=values["b"],
        q0=values.get("q0", q0 if q0 is not None else error_profile(0.0)),
        q1=values.get("q1", q1 if q1 is not None else error_profile(budget)),
    )
