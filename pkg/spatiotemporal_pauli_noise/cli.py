"""Command-line front end: ``spp-noise <command> [options]``.

Every command accepts ``--config FILE`` with a JSON document mirroring its
flags (dashes become underscores); flags given on the command line win. An
optional ``"settings"`` object in the file sets package settings without the
``SPPNOISE_`` prefix. Angles are given in units of pi.
"""

import argparse
import json
import logging
import math
import os
import sys
from contextlib import nullcontext

import django
from django.conf import settings
from django.test.utils import override_settings

from . import get_version
from .benchmark import NOISE_SOURCES, BenchmarkConfig, run_memory_benchmark
from .conf import DEFAULT_SETTINGS, get_setting
from .correlation import covariance_series, covariance_spectral, spectral_summary, transfer_from_mps
from .exceptions import InvalidParameterError, SppError
from .process import load_dilation
from .qca import LAYOUTS, QcaParams, build_lattice, density_dump_csv, run_series
from .spp import (
    WORKED_MODELS,
    TrajectoryDistribution,
    bond_ranks,
    build_spp_mps,
    entropy_sweep,
    mps_to_json,
    sample_trajectories,
    samples_to_csv,
    trajectory_distribution,
    worked_hamiltonian,
)
from .storm import (
    analytic_covariance,
    analytic_summary,
    parse_storm,
    solve_params,
    storm_diagnostics,
    storm_hmm,
)
from .utils import dumps_json, render_csv, write_output
from .verify import run_verification

logger = logging.getLogger(__name__)

PACKAGE_LOGGER = "spatiotemporal_pauli_noise"
STOCHASTIC = ("sample", "storm-sweep", "qca-sweep", "qec-memory")
# namespace entries that are not part of the reproducible run configuration
_RUN_ONLY = ("config", "out", "verbose", "handler", "settings", "dump_density")


def _logging_config(verbose):
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {"simple": {"format": "%(levelname)s %(name)s: %(message)s"}},
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "formatter": "simple",
                "stream": "ext://sys.stderr",
            }
        },
        "loggers": {PACKAGE_LOGGER: {"handlers": ["console"], "level": "DEBUG" if verbose else "INFO"}},
    }


def configure(run_settings=None, verbose=False):
    """Apply run settings; returns a context manager scoping them when Django is already set up."""
    run_settings = run_settings or {}
    unknown = sorted(set(k.upper() for k in run_settings) - set(DEFAULT_SETTINGS))
    if unknown:
        raise InvalidParameterError(f"Unknown settings {unknown}")
    prefixed = {f"SPPNOISE_{k.upper()}": v for k, v in run_settings.items()}
    if not settings.configured:
        settings.configure(LOGGING=_logging_config(verbose), **prefixed)
        django.setup()
        return nullcontext()
    logging.getLogger(PACKAGE_LOGGER).setLevel(logging.DEBUG if verbose else logging.INFO)
    return override_settings(**prefixed)


def _add_common(parser):
    parser.add_argument("--config", help="JSON run configuration; flags override its values")
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _add_model(parser, grid=False, slots=1, storm=False):
    source = parser.add_argument_group("process")
    source.add_argument("--model", choices=WORKED_MODELS, help="worked system-environment coupling")
    if grid:
        source.add_argument("--theta", type=float, nargs="+", help="coupling grid in units of pi")
    else:
        source.add_argument("--theta", type=float, default=0.5, help="coupling in units of pi")
    source.add_argument("--slots", type=int, default=slots, help="intermediate time slots k")
    source.add_argument("--dilation", help="JSON dilation document instead of a worked model")
    if storm:
        source.add_argument("--storm", nargs="+", metavar="NAME=VALUE", help="storm model, e.g. a=0.1 b=0.3")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spp-noise",
        description="Spatiotemporal Pauli processes, correlated noise models and surface-code memory.",
    )
    parser.add_argument("--version", action="version", version=get_version())
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    subparsers = {}

    def command(name, handler, summary):
        sub = commands.add_parser(name, help=summary, description=summary)
        _add_common(sub)
        sub.set_defaults(handler=handler)
        subparsers[name] = sub
        return sub

    sub = command("twirl", cmd_twirl, "entropy sweep and trajectory distribution of a twirled process")
    _add_model(sub, grid=True)
    sub.add_argument("--mps", action="store_true", help="include the SPP MPS tensors (dilation input)")

    sub = command("sample", cmd_sample, "sample Pauli trajectories exactly from an SPP")
    _add_model(sub, storm=True)
    sub.add_argument("--count", type=int, default=1000)
    sub.add_argument("--rounds", type=int, default=10, help="storm trajectory length")
    sub.add_argument("--seed", type=int)

    sub = command("spectrum", cmd_spectrum, "spectral summary of a transfer operator")
    _add_model(sub, slots=3, storm=True)
    sub.add_argument("--site", type=int, default=1, help="bulk MPS site")

    sub = command("covariance", cmd_covariance, "two-point covariance of Pauli observables")
    _add_model(sub, slots=3, storm=True)
    sub.add_argument("--site", type=int, default=1, help="bulk MPS site")
    sub.add_argument("--f", default="error", help="'error' or a Pauli label")
    sub.add_argument("--g", default="error", help="'error' or a Pauli label")
    sub.add_argument("--max-tau", type=int, default=20)

    sub = command(
        "storm-sweep", cmd_storm_sweep, "storm parameters and diagnostics over a correlation-length grid"
    )
    sub.add_argument("--xi", type=float, nargs="+")
    sub.add_argument("--marginal", type=float, help="stationary error rate per qubit and round")
    sub.add_argument("--q0-budget", type=float, default=0.0, help="calm-state error total")
    sub.add_argument("--q1-budget", type=float, help="storm-state error total")
    sub.add_argument("--rounds", type=int, default=100000)
    sub.add_argument("--chains", type=int, default=1)
    sub.add_argument("--lag", type=int, default=1)
    sub.add_argument("--seed", type=int)

    sub = command("qca-sweep", cmd_qca_sweep, "excitation density statistics of the lattice bath")
    sub.add_argument("--layout", choices=LAYOUTS, default="surface")
    sub.add_argument("--shape", type=int, nargs="+", default=[5], help="distance, width height, or length")
    sub.add_argument("--boundary", choices=("open", "periodic"))
    sub.add_argument("--a", type=float, default=1e-4)
    sub.add_argument("--b", type=float, default=0.5)
    sub.add_argument("--theta", type=float, nargs="+", help="flip angle grid in units of pi")
    sub.add_argument("--n-vec", type=float, nargs=3, default=[1.0, 0.0, 0.0])
    sub.add_argument("--cycles", type=int)
    sub.add_argument("--burn-in", type=int)
    sub.add_argument("--trajectories", type=int)
    sub.add_argument("--max-lag", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--dump-density", metavar="DIR", help="write per-cycle densities for every grid point")
    sub.add_argument("--seed", type=int)

    sub = command("qec-memory", cmd_qec_memory, "surface-code memory experiments under injected noise")
    sub.add_argument("--noise", choices=NOISE_SOURCES, default="storm")
    sub.add_argument("--distances", type=int, nargs="+", default=[3, 5])
    sub.add_argument("--grid", type=float, nargs="+", help="xi, theta (units of pi) or rate values")
    sub.add_argument("--shots", type=int, default=10000)
    sub.add_argument("--p", type=float, help="baseline circuit noise")
    sub.add_argument("--rounds-factor", type=int)
    sub.add_argument("--basis", choices=("Z", "X"), default="Z")
    sub.add_argument("--marginal", type=float)
    sub.add_argument("--q1-budget", type=float)
    sub.add_argument("--a", type=float, default=1e-4)
    sub.add_argument("--b", type=float, default=0.5)
    sub.add_argument("--n-vec", type=float, nargs=3, default=[1.0, 0.0, 0.0])
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--seed", type=int)

    sub = command("verify", cmd_verify, "run the oracle and property checks")
    mode = sub.add_mutually_exclusive_group()
    mode.add_argument("--quick", dest="mode", action="store_const", const="quick")
    mode.add_argument("--full", dest="mode", action="store_const", const="full")
    sub.add_argument("--seed", type=int, default=0)
    sub.set_defaults(mode="quick")
    return parser, subparsers


def _load_config(path, parser):
    try:
        with open(path, encoding="utf-8") as f:
            document = json.load(f)
    except (OSError, ValueError) as e:
        parser.error(f"cannot read config {path}: {e}")
    if not isinstance(document, dict):
        parser.error(f"config {path} must hold a JSON object")
    return document


def parse_args(argv=None):
    """Parse flags on top of the optional JSON configuration."""
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    args.settings = {}
    if args.config:
        document = _load_config(args.config, subparsers[args.command])
        args.settings = document.pop("settings", {})
        values = {k.replace("-", "_"): v for k, v in document.items()}
        unknown = sorted(set(values) - set(vars(args)) - {"command"})
        if unknown:
            subparsers[args.command].error(f"unknown config keys {unknown}")
        values.pop("command", None)
        subparsers[args.command].set_defaults(**values)
        settings_values = args.settings
        args = parser.parse_args(argv)
        args.settings = settings_values
    if args.command in STOCHASTIC and args.seed is None:
        subparsers[args.command].error("a seed is required (--seed or the config file)")
    return args


def run_config(args):
    """The reproducible part of the namespace, embedded in every output."""
    config = {k: v for k, v in vars(args).items() if k not in _RUN_ONLY}
    if args.settings:
        config["settings"] = args.settings
    return config


def _emit_json(args, payload):
    document = {"config": run_config(args), "version": get_version()}
    document.update(payload)
    write_output(dumps_json(document) + "\n", args.out)


def _model_mps(args):
    if args.dilation:
        return build_spp_mps(load_dilation(args.dilation))
    if getattr(args, "storm", None):
        return storm_hmm(parse_storm(args.storm)).to_mps(args.rounds)
    if args.model is None:
        raise InvalidParameterError("Choose a process with --model, --dilation or --storm")
    return build_spp_mps(worked_hamiltonian(args.model, args.theta * math.pi, args.slots))


def _transfer(args):
    if args.storm:
        return storm_hmm(parse_storm(args.storm)).transfer
    return transfer_from_mps(_model_mps(args), args.site)


def _labels(distribution, index):
    return "-".join(distribution.label(index))


def cmd_twirl(args):
    if args.dilation:
        mps = build_spp_mps(load_dilation(args.dilation))
        distribution = trajectory_distribution(mps)
        tol = get_setting("SUPPORT_TOL", DEFAULT_SETTINGS["SUPPORT_TOL"])
        payload = {
            "bond_dims": mps.bond_dims,
            "bond_ranks": bond_ranks(mps),
            "distribution": {
                _labels(distribution, i): float(p)
                for i, p in enumerate(distribution.probabilities)
                if p > tol
            },
        }
        if args.mps:
            payload["mps"] = mps_to_json(mps)
        _emit_json(args, payload)
        return 0
    if args.model is None or not args.theta:
        raise InvalidParameterError("twirl needs --model with a --theta grid, or --dilation")
    rows = entropy_sweep(args.model, [t * math.pi for t in args.theta], args.slots)
    first = TrajectoryDistribution(rows[0]["probabilities"], 1, args.slots)
    header = ["theta", "gqmi", "gqmi_twirled", "twirl_rel_entropy"]
    header += [f"p_{_labels(first, i)}" for i in range(len(first.probabilities))]
    table = (
        [theta, row["gqmi"].value, row["gqmi_twirled"].value, row["twirl_rel_entropy"].value]
        + list(row["probabilities"])
        for theta, row in zip(args.theta, rows)
    )
    write_output(render_csv(header, table, run_config(args)), args.out)
    return 0


def cmd_sample(args):
    mps = _model_mps(args)
    samples = sample_trajectories(mps, args.seed, args.count)
    write_output(samples_to_csv(samples, mps.n, run_config(args)), args.out)
    return 0


def cmd_spectrum(args):
    summary = spectral_summary(_transfer(args))
    payload = summary.as_dict()
    if args.storm:
        params = parse_storm(args.storm)
        payload["storm"] = params.as_dict()
        payload["analytic"] = analytic_summary(params).as_dict()
    _emit_json(args, payload)
    return 0


def cmd_covariance(args):
    t = _transfer(args)
    summary = spectral_summary(t)
    taus = list(range(1, args.max_tau + 1))
    direct = covariance_series(t, args.f, args.g, args.max_tau, summary)
    spectral = covariance_spectral(t, args.f, args.g, taus, summary)
    header = ["tau", "covariance", "covariance_spectral"]
    columns = [taus, direct, spectral]
    if args.storm:
        params = parse_storm(args.storm)
        header.append("covariance_analytic")
        columns.append([analytic_covariance(params, args.f, args.g, tau) for tau in taus])
    write_output(render_csv(header, zip(*columns), run_config(args)), args.out)
    return 0


STORM_COLUMNS = (
    "xi_target",
    "a",
    "b",
    "lambda_two",
    "gap",
    "xi",
    "marginal",
    "marginal_empirical",
    "marginal_stderr",
    "covariance",
    "covariance_empirical",
    "covariance_stderr",
)


def cmd_storm_sweep(args):
    if not args.xi:
        raise InvalidParameterError("storm-sweep needs an --xi grid")
    marginal = args.marginal
    if marginal is None:
        marginal = get_setting("QEC_BASELINE_P", DEFAULT_SETTINGS["QEC_BASELINE_P"])
    rows = []
    for xi in args.xi:
        params = solve_params(xi, marginal, args.q0_budget, args.q1_budget)
        row = storm_diagnostics(params, args.rounds, args.seed, chains=args.chains, lag=args.lag)
        row["xi_target"] = xi
        rows.append([row[c] for c in STORM_COLUMNS])
        logger.info(f"storm xi={xi}: a={params.a:.6g} b={params.b:.6g}")
    write_output(render_csv(STORM_COLUMNS, rows, run_config(args)), args.out)
    return 0


QCA_COLUMNS = ("theta", "sites", "mean_eta", "scaled_variance", "xi_eta", "r_squared")


def cmd_qca_sweep(args):
    if not args.theta:
        raise InvalidParameterError("qca-sweep needs a --theta grid")
    lattice = build_lattice(args.layout, *args.shape, boundary=args.boundary)
    cycles = args.cycles or get_setting("QCA_CYCLES", DEFAULT_SETTINGS["QCA_CYCLES"])
    burn_in = args.burn_in
    if burn_in is None:
        burn_in = get_setting("QCA_BURN_IN", DEFAULT_SETTINGS["QCA_BURN_IN"])
    if args.dump_density:
        os.makedirs(args.dump_density, exist_ok=True)
    config = run_config(args)
    rows = []
    for index, theta in enumerate(args.theta):
        params = QcaParams(args.a, args.b, theta * math.pi, tuple(args.n_vec))
        series = run_series(
            params,
            lattice,
            cycles,
            burn_in,
            args.seed,
            trajectories=args.trajectories,
            workers=args.workers,
            max_lag=args.max_lag,
        )
        summary = series.summary()
        rows.append([theta, lattice.size] + [summary[c] for c in QCA_COLUMNS[2:]])
        logger.info(f"qca theta={theta}pi: mean density {summary['mean_eta']:.4e}")
        if args.dump_density:
            path = os.path.join(args.dump_density, f"density_{index:03d}.csv")
            write_output(density_dump_csv(series, dict(config, theta=theta)), path)
    write_output(render_csv(QCA_COLUMNS, rows, config), args.out)
    return 0


def cmd_qec_memory(args):
    fields = (
        "distances",
        "shots",
        "seed",
        "noise",
        "grid",
        "p",
        "rounds_factor",
        "basis",
        "marginal",
        "q1_budget",
        "a",
        "b",
        "n_vec",
        "batch_size",
    )
    values = {name: getattr(args, name) for name in fields if getattr(args, name) is not None}
    config = BenchmarkConfig.from_dict(values)
    report = run_memory_benchmark(config, workers=args.workers)
    if args.format == "json":
        document = report.to_json()
        document["config"] = run_config(args)
        write_output(dumps_json(document) + "\n", args.out)
    else:
        report.config = run_config(args)
        write_output(report.to_csv(), args.out)
    return 0


def cmd_verify(args):
    report = run_verification(args.mode, args.seed)
    _emit_json(args, report.as_dict())
    failed = [c.name for c in report.checks if not c.passed]
    if failed:
        logger.error(f"Verification failed: {', '.join(failed)}")
        return 1
    return 0


def main(argv=None):
    try:
        args = parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        with configure(args.settings, args.verbose):
            return args.handler(args)
    except InvalidParameterError as e:
        logger.error(f"{args.command}: {e}")
        return 2
    except SppError as e:
        # input was valid but the computation could not complete
        logger.error(f"{args.command}: {type(e).__name__}: {e}")
        return 3
    except (ValueError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
