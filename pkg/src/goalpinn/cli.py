"""Command-line front end: run cases, compare strategies, self-verify.

Configuration precedence: built-in case defaults, then values from a JSON
config file (``--config``), then command-line flags.  Every run directory
receives a manifest holding the fully resolved configuration; feeding that
manifest back through ``--config`` reproduces the run bitwise on the same
platform.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import RunResult, TrainConfig, config_for_case, run_for_config
from .errors import ConfigurationError, GoalPinnError, NumericalError
from .gradcheck import JET_TOL, PARAM_TOL, run_gradcheck
from .network import save_checkpoint
from .plotting import convergence_plot, overlay_plot
from .problem import case_definitions

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

_FLAG_TO_KEY = {
    "mode": "mode",
    "sampling": "sampling",
    "epochs": "epochs",
    "resample_epoch": "resample_epochs",
    "refine_interval": "refine_interval",
    "refine_count": "refine_count",
    "lam": "lam",
    "n_interior": "n_interior",
    "m_boundary": "m_boundary",
    "pool_factor": "pool_factor",
    "lr": "lr",
    "seed": "seed",
    "weighted_quadrature": "weighted_quadrature",
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--case", type=int, choices=range(1, 6), help="benchmark case id")
    parser.add_argument("--mode", choices=["pinn", "deep-ritz"])
    parser.add_argument("--sampling", choices=["uniform", "dwr-resample", "dwr-refine"])
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--resample-epoch", type=int, action="append", dest="resample_epoch",
                        help="repeatable; one resampling event per occurrence")
    parser.add_argument("--refine-interval", type=int)
    parser.add_argument("--refine-count", type=int)
    parser.add_argument("--lambda", type=float, dest="lam")
    parser.add_argument("--n-interior", type=int)
    parser.add_argument("--m-boundary", type=int)
    parser.add_argument("--pool-factor", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--weighted-quadrature", action="store_const", const=True,
                        default=None, dest="weighted_quadrature")
    parser.add_argument("--avg-window", type=int, default=None,
                        help="plot-time averaging window in epochs")
    parser.add_argument("--config", type=str, help="JSON config file or a run manifest")
    parser.add_argument("--out", type=str, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goalpinn",
        description="Goal-oriented adaptive collocation training for Poisson problems",
    )
    parser.add_argument("--version", action="version", version=f"goalpinn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a single training run")
    _add_run_flags(run)

    compare = sub.add_parser("compare", help="baseline vs adaptive over several seeds")
    _add_run_flags(compare)
    compare.add_argument("--seeds", type=str, default="1,2,3,4,5",
                         help="comma-separated seed list")

    grad = sub.add_parser("gradcheck", help="finite-difference self-verification")
    grad.add_argument("--seed", type=int, default=0)
    return parser


def _load_config_file(path: str) -> tuple[int | None, dict]:
    data = json.loads(Path(path).read_text())
    if "config" in data and isinstance(data["config"], dict):
        # run manifest: fully resolved configuration
        case_id = data.get("case_id")
        overrides = {k: v for k, v in data["config"].items() if v is not None}
    else:
        case_id = data.pop("case", data.pop("case_id", None)) if isinstance(data, dict) else None
        overrides = {k: v for k, v in data.items() if v is not None}
    return case_id, overrides


def _dashes_to_key(value):
    return value.replace("-", "_") if isinstance(value, str) else value


def _resolve(args) -> tuple[int, TrainConfig, int | None]:
    """Merge case defaults, config file and flags into a TrainConfig."""
    overrides: dict = {}
    case_id = args.case
    if args.config:
        file_case, file_overrides = _load_config_file(args.config)
        if case_id is None:
            case_id = file_case
        overrides.update(file_overrides)
    if case_id is None:
        raise ConfigurationError("a case id is required (flag --case or config file)")
    for flag, key in _FLAG_TO_KEY.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag in ("mode", "sampling"):
            value = _dashes_to_key(value)
        if flag == "resample_epoch":
            value = tuple(value)
        overrides[key] = value
    overrides.setdefault("mode", None)
    overrides.setdefault("sampling", "uniform")
    if overrides.get("resample_epochs") and overrides["sampling"] == "uniform":
        overrides["sampling"] = "dwr_resample"
    case = case_definitions(int(case_id))
    mode = overrides.pop("mode")
    sampling = overrides.pop("sampling")
    seed = overrides.pop("seed", 0)
    config = config_for_case(case, mode=mode, sampling=sampling, seed=seed, **overrides)
    return int(case_id), config, args.avg_window


def _manifest(case_id: int, config: TrainConfig, out_dir: Path,
              avg_window: int | None, command: str) -> dict:
    return {
        "manifest_version": 1,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "platform": platform.platform(),
        "command": command,
        "case_id": case_id,
        "master_seed": config.seed,
        "avg_window": avg_window,
        "out_dir": str(out_dir),
        "config": config.to_dict(),
    }


def _write_checkpoints(result: RunResult, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    names = {"primal": result.u_net, "adjoint": result.z_net, "zprime": result.z_prime_net}
    for name, net in names.items():
        if net is not None:
            save_checkpoint(net, directory / f"{name}_final.json")
    for epoch, nets in result.event_checkpoints.items():
        for name, net in nets.items():
            save_checkpoint(net, directory / f"{name}_epoch{epoch:05d}.json")


def _execute_run(case_id: int, config: TrainConfig, out_dir: Path,
                 avg_window: int | None) -> RunResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(case_id, config, out_dir, avg_window, "run")
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    case = case_definitions(case_id)
    trace_path = out_dir / "trace.csv"
    try:
        result = run_for_config(case, config)
    except NumericalError as err:
        partial = getattr(err, "trace", None)
        if partial is not None:
            partial.to_csv(trace_path)
        raise
    result.trace.to_csv(trace_path)
    _write_checkpoints(result, out_dir / "checkpoints")
    convergence_plot(trace_path, out_dir / "plot.svg", avg_window=avg_window,
                     title=f"case {case_id} ({config.mode}, {config.sampling})")
    manifest["results"] = {
        "final_j_error": result.trace.final_j_error(),
        **result.metadata,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return result


def cmd_run(args) -> int:
    try:
        case_id, config, avg_window = _resolve(args)
    except (ConfigurationError, FileNotFoundError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out) if args.out else Path(
        f"goalpinn_out/case{case_id}_{config.mode}_{config.sampling}_seed{config.seed}"
    )
    try:
        result = _execute_run(case_id, config, out_dir, avg_window)
    except NumericalError as err:
        print(f"numerical failure: {err} (epoch {err.epoch}); partial trace flushed",
              file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"run complete: {out_dir} (final |J error| = "
          f"{abs(result.trace.final_j_error()):.3e})")
    return EXIT_OK


def _compare_job(case_id: int, config_dict: dict, out_dir: str,
                 avg_window: int | None) -> dict:
    """One strategy/seed run inside a worker process."""
    config = TrainConfig.from_dict(config_dict)
    result = _execute_run(case_id, config, Path(out_dir), avg_window)
    return {
        "seed": config.seed,
        "sampling": config.sampling,
        "final_error": abs(result.trace.final_j_error()),
        "trace_path": str(Path(out_dir) / "trace.csv"),
    }


def worker_count(n_jobs: int) -> int:
    env = os.environ.get("GOALPINN_THREADS")
    if env:
        return max(1, min(int(env), n_jobs))
    return max(1, min(os.cpu_count() or 1, n_jobs))


def cmd_compare(args) -> int:
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
        if not seeds:
            raise ConfigurationError("at least one seed is required")
        case_id, base_config, avg_window = _resolve(args)
    except (ConfigurationError, ValueError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out) if args.out else Path(f"goalpinn_out/compare_case{case_id}")
    out_dir.mkdir(parents=True, exist_ok=True)
    case = case_definitions(case_id)

    resample_epochs = base_config.resample_epochs or (case.resample_epoch,)
    jobs = []
    for seed in seeds:
        for sampling in ("uniform", "dwr_resample"):
            adaptive = sampling == "dwr_resample"
            config = replace(
                base_config, sampling=sampling, seed=seed,
                resample_epochs=resample_epochs if adaptive else (),
                refine_interval=None, refine_count=None,
                weighted_quadrature=base_config.weighted_quadrature if adaptive else False,
            )
            run_dir = out_dir / f"seed{seed}" / sampling
            jobs.append((case_id, config.to_dict(), str(run_dir), avg_window))

    results = []
    try:
        n_workers = worker_count(len(jobs))
        if n_workers == 1:
            results = [_compare_job(*job) for job in jobs]
        else:
            with ProcessPoolExecutor(max_workers=n_workers) as pool:
                results = list(pool.map(_compare_job, *zip(*jobs)))
    except NumericalError as err:
        print(f"numerical failure during comparison: {err}", file=sys.stderr)
        return EXIT_NUMERICAL

    by_seed = {seed: {} for seed in seeds}
    traces = {"uniform": [], "dwr_resample": []}
    for row in results:
        by_seed[row["seed"]][row["sampling"]] = row["final_error"]
        traces[row["sampling"]].append(row["trace_path"])

    lines = ["seed,uniform_final_error,adaptive_final_error"]
    for seed in seeds:
        lines.append(f"{seed},{by_seed[seed]['uniform']!r},{by_seed[seed]['dwr_resample']!r}")
    med_u = float(np.median([by_seed[s]["uniform"] for s in seeds]))
    med_a = float(np.median([by_seed[s]["dwr_resample"] for s in seeds]))
    lines.append(f"median,{med_u!r},{med_a!r}")
    (out_dir / "summary.csv").write_text("\n".join(lines) + "\n")

    overlay_plot(
        {"standard (uniform)": traces["uniform"], "adaptive (dwr)": traces["dwr_resample"]},
        out_dir / "plot.svg",
        event_epochs=(case.resample_epoch,),
        avg_window=avg_window,
        title=f"case {case_id}: uniform vs adaptive (median over {len(seeds)} seeds)",
    )
    manifest = _manifest(case_id, base_config, out_dir, avg_window, "compare")
    manifest["seeds"] = seeds
    manifest["results"] = {"median_uniform": med_u, "median_adaptive": med_a}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(f"compare complete: median |J error| uniform={med_u:.3e} adaptive={med_a:.3e}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(seed=args.seed)
    failures = []
    for res in results:
        status = "ok" if res.passed else "FAIL"
        print(f"{res.label:>14}: jets {res.max_jet_discrepancy:.3e} "
              f"(tol {JET_TOL:.0e}), params {res.max_param_discrepancy:.3e} "
              f"(tol {PARAM_TOL:.0e}) [{status}]")
        if not res.passed:
            failures.append(res.label)
    if failures:
        print(f"gradcheck failed for: {', '.join(failures)}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
    except GoalPinnError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
