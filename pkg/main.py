#!/usr/bin/env python3
"""
sensipod - Reduced-order optimal control of the diffusion-convection-reaction
equation with sensitivity-enriched POD bases.

Command line entry point: full and reduced solves, basis and sensitivity
construction, parameter sweeps and result emission.
"""

import sys
import json
import logging
import argparse
import traceback
from pathlib import Path

from app import __version__
from app.config import Config
from app.errors import SensipodError
from app.utils.logger import setup_logger
from app.utils.helpers import (
    create_directory_if_not_exists,
    format_seconds,
    get_platform_info,
    parse_grid,
)

logger = logging.getLogger("sensipod")


def excepthook(exc_type, exc_value, exc_traceback):
    """
    Global exception handler to log uncaught exceptions
    """
    logging.getLogger("sensipod").error("Uncaught exception",
                                        exc_info=(exc_type, exc_value, exc_traceback))
    traceback.print_exception(exc_type, exc_value, exc_traceback)


def _split(value):
    return [part.strip() for part in value.split(",") if part.strip()]


def build_parser():
    """Argument parser with one subparser per command"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--profile", choices=sorted(Config.PROFILES), help="Mesh/time-grid preset")
    common.add_argument("--eps", type=float, help="Diffusion coefficient (nominal for sweeps)")
    common.add_argument("--grid", help="Sweep grid of 1/eps values, start:step:stop or a comma list")
    common.add_argument("--method", help="Comma-separated methods: BPOD, ExtPOD, ExpPOD, SAIM")
    common.add_argument("--kind", help="Comma-separated snapshot kinds: Y, P, YP")
    common.add_argument("--rank", type=int, help="Fixed POD rank (overrides --gamma)")
    common.add_argument("--ranks", help="Comma-separated fixed ranks for an error-vs-rank sweep")
    common.add_argument("--seed", type=int, help="Seed of the random gradient-check directions")
    common.add_argument("--gamma", type=float, help="Discarded-energy threshold")
    common.add_argument("--dmu", type=float, help="Finite-difference parameter increment")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--jobs", type=int, help="Worker threads for sweeps")
    common.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="sensipod", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sensipod {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("solve-full", parents=[common], help="Full-order optimal control solve")
    sub.add_parser("build-basis", parents=[common], help="POD basis of the optimal trajectories")
    sens = sub.add_parser("sensitivities", parents=[common], help="Trajectory and basis sensitivities")
    sens.add_argument("--sensitivity", choices=["FD", "CSE"], help="Sensitivity route")
    target = sub.add_parser("solve-reduced", parents=[common],
                            help="Reduced solve at a target eps against the full solution")
    target.add_argument("--target", type=float, required=True, help="Target diffusion coefficient")
    sub.add_parser("sweep", parents=[common], help="Parameter sweep over methods and snapshot kinds")
    emit = sub.add_parser("emit", parents=[common], help="Plot data from an emitted CSV")
    emit.add_argument("--input", required=True, help="CSV written by the sweep command")
    return parser


def load_config(args):
    """Configuration file, profile and flag overrides"""
    config = Config(args.config, profile=args.profile)
    if args.eps is not None:
        config.set("problem", "epsilon", args.eps)
    if args.grid is not None:
        parse_grid(args.grid)
        config.set("sweep", "grid", args.grid)
    if args.method is not None:
        config.set("sweep", "methods", _split(args.method))
    if args.kind is not None:
        config.set("pod", "kinds", _split(args.kind))
    if args.rank is not None:
        config.set("pod", "rank", args.rank)
    elif args.gamma is not None:
        config.set("pod", "gamma", args.gamma)
        config.set("pod", "rank", None)
    if args.ranks is not None:
        config.set("sweep", "ranks", [int(r) for r in _split(args.ranks)])
    if args.seed is not None:
        config.set("sweep", "seed", args.seed)
    if args.dmu is not None:
        config.set("sensitivity", "delta_mu", args.dmu)
    if args.out is not None:
        config.set("sweep", "output_dir", args.out)
    if args.jobs is not None:
        config.set("sweep", "jobs", args.jobs)
    if getattr(args, "sensitivity", None):
        config.set("sensitivity", "method", args.sensitivity)
    return config


def _output_dir(config):
    return create_directory_if_not_exists(config.get("sweep", "output_dir"))


def _pod_arguments(config):
    pod = config.get("pod")
    if pod["rank"] is not None:
        return {"rank": int(pod["rank"])}
    return {"gamma": float(pod["gamma"])}


def cmd_solve_full(config):
    """Solve the full problem and write its trajectories"""
    from app.solver.ocp import OCPSetup, gradient_check, optimize
    from app.utils.export import export_trajectory_csv

    setup = OCPSetup.from_config(config)
    checks = gradient_check(setup, seed=int(config.get("sweep", "seed")))
    solution = optimize(setup, **config.optimizer_options())
    out = _output_dir(config)
    for name, trajectory in zip("yup", solution):
        export_trajectory_csv(trajectory, out / f"full_{name}.csv")
    with open(out / "full_stats.json", "w") as f:
        json.dump({**solution.stats.to_dict(), "epsilon": setup.epsilon,
                   "n_dofs": setup.space.n_dofs, "gradient_check": float(checks.max()),
                   "platform": get_platform_info()}, f, indent=4)

    stats = solution.stats
    logger.info(
        f"Full solve at eps={setup.epsilon:.6g}: cost {stats.to_dict()['cost']:.10e}, "
        f"{stats.iterations} iterations, {format_seconds(stats.wall_time)}"
    )
    return 0 if solution.converged else 1


def _nominal(config):
    from app.solver.ocp import OCPSetup, optimize

    setup = OCPSetup.from_config(config)
    return setup, optimize(setup, **config.optimizer_options())


def cmd_build_basis(config):
    """POD bases of the nominal optimum, one per snapshot kind"""
    from app.reduction.pod import MassFactor, SnapshotKind, build_snapshots, compute_pod

    setup, solution = _nominal(config)
    factor = MassFactor.from_space(setup.space)
    out = _output_dir(config)
    for name in config.get("pod", "kinds"):
        kind = SnapshotKind.parse(name)
        snapshots = build_snapshots(solution.y, solution.p, kind, setup.epsilon)
        basis = compute_pod(snapshots, factor, **_pod_arguments(config))
        path = basis.save(out / f"basis_{kind.value}")
        logger.info(f"{kind.label}: rank {basis.rank}, energy {basis.energy:.6f}, saved to {path}")
    return 0


def cmd_sensitivities(config):
    """Trajectory sensitivities at the nominal epsilon and the derived Psi_mu"""
    import numpy as np

    from app.reduction.pod import MassFactor, SnapshotKind, build_snapshots, compute_pod
    from app.reduction.sensitivity import (
        snapshot_sensitivity,
        solve_cse,
        solve_fd,
        svd_sensitivities,
    )
    from app.solver.ocp import optimize
    from app.utils.export import export_trajectory_csv

    options = config.optimizer_options()
    sens = config.get("sensitivity")
    setup, solution = _nominal(config)
    if str(sens["method"]).upper() == "CSE":
        triple = solve_cse(setup, solution, operator=sens["operator"], **options)
    else:
        triple = solve_fd(setup.with_epsilon, setup.epsilon, sens["delta_mu"],
                          solver=lambda mu: optimize(setup.with_epsilon(mu), **options),
                          concurrent=bool(sens["concurrent"]))

    out = _output_dir(config)
    for name, trajectory in (("s_y", triple.s_y), ("s_u", triple.s_u), ("s_p", triple.s_p)):
        export_trajectory_csv(trajectory, out / f"sensitivity_{name}.csv")

    factor = MassFactor.from_space(setup.space)
    for name in config.get("pod", "kinds"):
        kind = SnapshotKind.parse(name)
        basis = compute_pod(build_snapshots(solution.y, solution.p, kind, setup.epsilon),
                            factor, **_pod_arguments(config))
        derivative = svd_sensitivities(basis, snapshot_sensitivity(triple, kind))
        np.save(out / f"psi_mu_{kind.value}.npy", derivative.Psi_mu)
        logger.info(f"{kind.label}: lambda_mu = {np.array2string(derivative.lambda_mu, precision=4)}")
    return 0


def _run_harness(config, sweep):
    from app.bench.harness import SweepHarness
    from app.solver.ocp import OCPSetup

    harness = SweepHarness(sweep, OCPSetup.from_config(config), config.optimizer_options())
    return harness, harness.run()


def _report(records):
    """Log failed and non-converged cells; exit code 1 if there are any"""
    failed = [r for r in records if r.failed]
    unconverged = [r for r in records if not r.converged and not r.failed]
    for record in failed:
        logger.error(
            f"FAILED eps={record.epsilon:.6g} {record.method}/{record.kind}/l={record.rank}: {record.error}"
        )
    for record in unconverged:
        logger.warning(f"NOT CONVERGED eps={record.epsilon:.6g} {record.method}/{record.kind}/l={record.rank}")
    if failed or unconverged:
        logger.error(
            f"{len(failed)} of {len(records)} cells failed, {len(unconverged)} did not converge"
        )
        return 1
    return 0


def cmd_solve_reduced(config, target):
    """Reduced solves at one target epsilon for every configured method and kind"""
    sweep = config.sweep_config()
    sweep.grid = [target]
    harness, records = _run_harness(config, sweep.validate())
    for r in records:
        logger.info(
            f"{r.method:>6} {r.kind:>2} rank={r.rank:3d} l={r.l:3d}  state {r.state_err:.4e}  "
            f"control {r.control_err:.4e}  t_red {r.t_reduced:.3f}s  t_full {r.t_full:.3f}s"
        )
    return _report(records)


def cmd_sweep(config):
    """Run the sweep and emit CSV, plot data and spectra"""
    from app.bench.emit import emit

    harness, records = _run_harness(config, config.sweep_config())
    paths = emit(records, _output_dir(config), spectrum=harness.spectrum())
    logger.info(f"Wrote {len(paths)} result files to {config.get('sweep', 'output_dir')}")
    return _report(records)


def cmd_emit(config, source):
    """Regenerate plot data from a sweep CSV"""
    from app.bench.emit import emit, read_records

    frame = read_records(source)
    out = Path(config.get("sweep", "output_dir"))
    emit(frame, out, formats=("plotdata",))
    return 0


def run(args):
    """Dispatch a parsed command line; returns the exit code"""
    config = load_config(args)
    command = args.command
    if command == "solve-full":
        return cmd_solve_full(config)
    if command == "build-basis":
        return cmd_build_basis(config)
    if command == "sensitivities":
        return cmd_sensitivities(config)
    if command == "solve-reduced":
        return cmd_solve_reduced(config, args.target)
    if command == "sweep":
        return cmd_sweep(config)
    return cmd_emit(config, args.input)


def main(argv=None):
    """Main entry point for the application"""
    args = build_parser().parse_args(argv)

    # Set up logging
    config_for_paths = None
    try:
        config_for_paths = Config(args.config)
    except SensipodError:
        pass
    log_dir = config_for_paths.get("paths", "log_dir") if config_for_paths else None
    setup_logger(log_dir, level=args.log_level, run_name=args.command)

    # Set global exception handler
    sys.excepthook = excepthook

    logger.info(f"Starting sensipod {__version__}: {args.command}")
    try:
        return run(args)
    except (SensipodError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
