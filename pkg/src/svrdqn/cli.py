"""Command line entry point: ``svrdqn run | variance-sweep | summarize``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .environments import logistic_finite_sum, quadratic_finite_sum
from .harness import CheckpointError, run_experiment, summarize
from .optimizers import AdamState, svr_dqn_outer_step
from .variance import bound_verification_sweep, sweep_passed

log = logging.getLogger("svrdqn")

SWEEP_COLUMNS = ["iteration", "estimator", "empirical_var", "bound", "subopt", "trials", "pass"]


def make_sweep_problem(cfg: ExperimentConfig, rng: np.random.Generator):
    sw = cfg.sweep
    n, dim = int(sw["n"]), int(sw["dim"])
    if sw["problem"] == "quadratic":
        return quadratic_finite_sum(rng.normal(size=(n, dim)))
    X = rng.normal(size=(n, dim))
    y = np.where(X @ rng.normal(size=dim) + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
    return logistic_finite_sum(X, y, float(sw["lam"]))


def descent_trajectory(problem, cfg: ExperimentConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Snapshots of an SVR-DQN run started ``start_distance`` away from the optimum,
    taken at evenly spaced outer steps (the first point is the start)."""
    sw = cfg.sweep
    svrg = cfg.svrg_config()
    direction = rng.normal(size=problem.dim)
    w = problem.w_star + float(sw["start_distance"]) * direction / np.linalg.norm(direction)
    adam = AdamState.zeros(problem.dim, alpha=float(sw["alpha"]))
    steps, n_points = int(sw["outer_steps"]), int(sw["points"])
    keep = set(np.linspace(0, steps, n_points).round().astype(int).tolist())
    points = []
    for s in range(steps + 1):
        if s in keep:
            points.append(w.copy())
        if s < steps:
            w, adam, _ = svr_dqn_outer_step(w, svrg, adam, problem.grads, problem.n, rng)
    return points


def run_variance_sweep(cfg: ExperimentConfig, out_dir=None, figures: bool = True):
    rng = np.random.default_rng(int(cfg.sweep["seed"]))
    problem = make_sweep_problem(cfg, rng)
    points = descent_trajectory(problem, cfg, rng)
    reports = bound_verification_sweep(problem, cfg.svrg_config(), int(cfg.sweep["trials"]),
                                       points, rng)
    out = Path(out_dir or cfg.run["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    rows = [r.csv_row() for r in reports]
    with open(out / "variance_sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    if figures:
        from .plotting import plot_variance_sweep
        plot_variance_sweep(rows, out / "figures" / "variance_sweep.png", problem.name)
    return reports


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output:
        cfg.run["output_dir"] = args.output
    result = run_experiment(cfg, workers=args.workers, resume=args.resume)
    for kind, o in result.summary["optimizers"].items():
        print(f"{kind:14s} final={o['final_return']:.4f} median_auc={o['median_auc']:.2f} "
              f"frames_to_95={o['frames_to_95']}")
    for msg in result.failures:
        print(f"ABORTED: {msg}", file=sys.stderr)
    return 0 if result.ok else 1


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    reports = run_variance_sweep(cfg, args.output, figures=not args.no_figures)
    for r in reports:
        print(f"point {r.iteration} {r.estimator:22s} var={r.empirical_var:.3e} "
              f"bound={r.bound:.3e} subopt={r.subopt:.3e} {'PASS' if r.passed else 'FAIL'}")
    return 0 if sweep_passed(reports) else 1


def _cmd_summarize(args) -> int:
    result = summarize(args.inputs)
    for kind, s in result["summary"].items():
        print(f"{kind:14s} mean={s['mean']:.2f}% median={s['median']:.2f}% "
              f"({s['environments']} environments)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svrdqn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train Adam baseline and/or SVR-DQN over seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint file or directory")
    p.add_argument("--output", default=None, help="override run.output_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("variance-sweep", help="check empirical variance against the bounds")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("summarize", help="normalized scores across run directories")
    p.add_argument("--inputs", required=True)
    p.set_defaults(func=_cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
