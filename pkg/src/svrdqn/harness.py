"""Seeded multi-trial experiments: Adam baseline vs SVR-DQN on the desk-scale
environments, with CSV learning curves, figures, checkpoints and normalized
score summaries.

Output layout of ``run_experiment`` under ``run.output_dir``::

    config.yaml                  resolved configuration
    curves/<kind>_seed<s>.csv    per-trial learning curve (CSV_COLUMNS)
    aggregate_<kind>.csv         mean/std across seeds per eval frame
    summary.json                 optimum, random score, final scores, AUCs
    checkpoints/<kind>_seed<s>.ckpt
    figures/learning_curves.png, figures/gradient_variance.png
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .config import ExperimentConfig, config_from_dict, dump_config
from .environments import make_environment, value_iteration
from .numeric import MlpNetwork, NonFiniteError
from .optimizers import AdamState, svr_dqn_outer_step
from .rl import (EpsilonSchedule, OptimizerState, QLearner, ReplayBuffer, Transition,
                 bellman_grad_fn, epsilon_greedy_action, train_iteration)
from .variance import trace_variance

log = logging.getLogger(__name__)

CSV_COLUMNS = ["trial_seed", "frame", "eval_return", "loss", "grad_var_empirical",
               "grad_var_bound", "wall_ms"]
AGGREGATE_COLUMNS = ["frame", "mean_return", "std_return", "moving_avg_4", "n_trials",
                     "mean_grad_var"]
SUMMARY_COLUMNS = ["environment", "optimizer", "final_return", "random_score",
                   "baseline_score", "normalized_score"]

CHECKPOINT_VERSION = 1
STREAMS = ("init", "env", "act", "train", "eval", "variance")
RANDOM_POLICY_STREAM = 99
MOVING_AVERAGE_WINDOW = 4

# Reported Atari-scale mean/median normalized scores (percent); documentation
# only, not reproducible at desk scale.
REFERENCE_ATARI_SCORES = {
    "svr-dqn": {"mean": 139.75, "median": 118.02},
    "double-dqn": {"mean": 92.48, "median": 63.13},
}


class CheckpointError(RuntimeError):
    """Checkpoint file is corrupt, truncated or from another version."""


class UndefinedScoreError(ValueError):
    """Baseline and random scores coincide, so the normalized score is undefined."""


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def _parse(s: str) -> float:
    return float(s) if s != "" else float("nan")


@dataclass
class EvalRecord:
    seed: int
    frame: int
    eval_return: float
    loss: float = float("nan")
    grad_var_empirical: float = float("nan")
    grad_var_bound: float = float("nan")
    wall_ms: float = float("nan")

    def row(self) -> list[str]:
        return [_fmt(self.seed), _fmt(self.frame), _fmt(self.eval_return), _fmt(self.loss),
                _fmt(self.grad_var_empirical), _fmt(self.grad_var_bound), _fmt(self.wall_ms)]

    @classmethod
    def from_row(cls, row: dict) -> "EvalRecord":
        return cls(int(row["trial_seed"]), int(row["frame"]), _parse(row["eval_return"]),
                   _parse(row["loss"]), _parse(row["grad_var_empirical"]),
                   _parse(row["grad_var_bound"]), _parse(row["wall_ms"]))


def read_curve(path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [EvalRecord.from_row(r) for r in reader]


def trial_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators per purpose, keyed on ``(seed, stream index)``,
    so adding seeds or streams never perturbs existing ones."""
    return {name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
            for i, name in enumerate(STREAMS)}


def discounted_return(rewards: Iterable[float], gamma: float) -> float:
    total, scale = 0.0, 1.0
    for r in rewards:
        total += scale * r
        scale *= gamma
    return total


class Trial:
    """One seeded training run of one optimizer; all mutable state lives here."""

    def __init__(self, cfg: ExperimentConfig, kind: str, seed: int):
        self.cfg = cfg
        self.kind = kind
        self.seed = int(seed)
        self.rngs = trial_streams(self.seed)
        self.env = make_environment(cfg.env_name, seed=self.rngs["env"], **cfg.env_params)
        self.eval_env = make_environment(cfg.env_name, seed=self.rngs["eval"], **cfg.env_params)
        rl = cfg.rl
        self.gamma = float(rl["gamma"])
        sizes = [self.env.state_dim, *[int(h) for h in cfg.network["hidden"]], self.env.n_actions]
        self.learner = QLearner.create(sizes, self.rngs["init"], cfg.network["activation"],
                                       gamma=self.gamma, sync_period=int(rl["sync_period"]),
                                       target_rule=rl["target_rule"])
        self.opt = OptimizerState(kind, AdamState.zeros(self.learner.online.n_params,
                                                        **cfg.adam_params()), cfg.svrg_config())
        self.buffer = ReplayBuffer(int(rl["buffer_capacity"]), self.env.state_dim)
        frames = int(cfg.run["frames"])
        self.schedule = EpsilonSchedule(float(rl["eps_start"]), float(rl["eps_end"]),
                                        max(1, int(round(float(rl["eps_anneal_fraction"]) * frames))))
        self.learn_every = int(rl["learn_every"])
        self.frame = 0
        self.iterations = 0
        self.pending_losses: list[float] = []
        self.obs = self.env.reset()

    # -- training -------------------------------------------------------
    def step(self) -> None:
        eps = self.schedule(self.frame)
        a = epsilon_greedy_action(self.learner.q_values(self.obs), eps, self.rngs["act"])
        s_next, r, terminal = self.env.step(a)
        self.buffer.push(Transition(self.obs, a, r, s_next, terminal))
        self.obs = self.env.reset() if self.env.done else s_next
        self.frame += 1
        if self.frame % self.learn_every == 0:
            res = train_iteration(self.learner, self.buffer, self.opt, self.rngs["train"])
            if not res.skipped:
                if not math.isfinite(res.loss):
                    raise NonFiniteError(f"non-finite Bellman loss at frame {self.frame}")
                self.iterations += 1
                self.pending_losses.append(res.loss)

    # -- evaluation -----------------------------------------------------
    def evaluate(self) -> float:
        run = self.cfg.run
        eps = float(run["eval_epsilon"])
        rng = self.rngs["eval"]
        returns = []
        for _ in range(int(run["eval_episodes"])):
            s = self.eval_env.reset()
            rewards = []
            while not self.eval_env.done:
                a = epsilon_greedy_action(self.learner.q_values(s), eps, rng)
                s, r, _ = self.eval_env.step(a)
                rewards.append(r)
            returns.append(discounted_return(rewards, self.gamma))
        return math.fsum(returns) / len(returns)

    def gradient_variance(self) -> float:
        """Trace-variance of this optimizer's gradient estimate at the current weights.

        The SVR-DQN surrogate ``w_tilde - w_m`` is divided by ``m * eta`` so
        both optimizers are reported in gradient units.
        """
        trials = int(self.cfg.run["variance_trials"])
        svrg = self.opt.svrg
        if trials < 2 or len(self.buffer) < svrg.B:
            return float("nan")
        rng = self.rngs["variance"]
        w = self.learner.online.weights
        draws = []
        for _ in range(trials):
            batch = self.buffer.sample_batch(svrg.B, rng, replace=False)
            grad_fn, _ = bellman_grad_fn(self.learner, batch)
            if self.kind == "adam-baseline":
                draws.append(grad_fn(w, np.arange(svrg.B)).mean(axis=0))
            else:
                _, _, g = svr_dqn_outer_step(w, svrg, AdamState.zeros(w.shape[0]), grad_fn,
                                             svrg.B, rng)
                scale = svrg.m * svrg.eta
                draws.append(g / scale if scale > 0 else g)
        return trace_variance(np.stack(draws))[0]

    def make_record(self, wall_ms: float) -> EvalRecord:
        loss = math.fsum(self.pending_losses) / len(self.pending_losses) if self.pending_losses \
            else float("nan")
        self.pending_losses = []
        return EvalRecord(self.seed, self.frame, self.evaluate(), loss, self.gradient_variance(),
                          float("nan"), wall_ms)

    # -- checkpointing --------------------------------------------------
    def save(self, path) -> None:
        persist = bool(self.cfg.run["persist_buffer"])
        buf = self.buffer.get_state(persist)
        arrays = {
            "online": self.learner.online.weights,
            "target": self.learner.target.weights,
            "adam_m": self.opt.adam.m,
            "adam_v": self.opt.adam.v,
            "obs": self.obs,
        }
        for name, value in buf.pop("arrays", {}).items():
            arrays[f"buffer_{name}"] = value
        meta = {
            "version": CHECKPOINT_VERSION,
            "config": self.cfg.to_dict(),
            "kind": self.kind,
            "seed": self.seed,
            "frame": self.frame,
            "iterations": self.iterations,
            "pending_losses": self.pending_losses,
            "steps_since_sync": self.learner.steps_since_sync,
            "adam_t": self.opt.adam.t,
            "buffer": buf,
            "buffer_persisted": persist,
            "env": self.env.get_state(),
            "eval_env": self.eval_env.get_state(),
            "rngs": {k: g.bit_generator.state for k, g in self.rngs.items()},
        }
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path, cfg: Optional[ExperimentConfig] = None) -> "Trial":
        try:
            with np.load(path, allow_pickle=False) as data:
                arrays = {k: data[k] for k in data.files}
            meta = json.loads(arrays.pop("meta").tobytes().decode())
        except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as exc:
            raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: checkpoint version {meta.get('version')} "
                                  f"!= {CHECKPOINT_VERSION}")
        if not meta.get("buffer_persisted"):
            raise CheckpointError(f"{path}: replay buffer was not persisted; cannot resume exactly")
        saved_cfg = config_from_dict(meta["config"])
        if cfg is not None:
            saved_cfg.run["output_dir"] = cfg.run["output_dir"]
        trial = cls(saved_cfg, meta["kind"], meta["seed"])
        expected = trial.learner.online.n_params
        for key in ("online", "target", "adam_m", "adam_v"):
            if arrays[key].shape != (expected,):
                raise CheckpointError(f"{path}: {key} has shape {arrays[key].shape}")
        # everything validated; from here on state is applied
        trial.learner.online = trial.learner.online.with_weights(arrays["online"].copy())
        trial.learner.target = trial.learner.target.with_weights(arrays["target"].copy())
        trial.learner.steps_since_sync = meta["steps_since_sync"]
        adam = trial.opt.adam
        trial.opt.adam = AdamState(arrays["adam_m"].copy(), arrays["adam_v"].copy(), meta["adam_t"],
                                   adam.alpha, adam.beta1, adam.beta2, adam.epsilon)
        buf_state = dict(meta["buffer"])
        buf_state["arrays"] = {k[len("buffer_"):]: v for k, v in arrays.items()
                               if k.startswith("buffer_")}
        trial.buffer.set_state(buf_state)
        trial.env.set_state(meta["env"])
        trial.eval_env.set_state(meta["eval_env"])
        for k, state in meta["rngs"].items():
            trial.rngs[k].bit_generator.state = state
        trial.obs = arrays["obs"].copy()
        trial.frame = meta["frame"]
        trial.iterations = meta["iterations"]
        trial.pending_losses = list(meta["pending_losses"])
        return trial


def save_checkpoint(trial: Trial, path) -> None:
    trial.save(path)


def load_checkpoint(path, cfg: Optional[ExperimentConfig] = None) -> Trial:
    return Trial.load(path, cfg)


@dataclass
class TrialOutcome:
    kind: str
    seed: int
    records: list[EvalRecord]
    error: Optional[str] = None


def _trial_name(kind: str, seed: int) -> str:
    return f"{kind}_seed{seed}"


def run_trial(cfg: ExperimentConfig, kind: str, seed: int, resume: Optional[str] = None
              ) -> TrialOutcome:
    out = Path(cfg.run["output_dir"])
    name = _trial_name(kind, seed)
    curve_path = out / "curves" / f"{name}.csv"
    ckpt_dir = out / "checkpoints"
    curve_path.parent.mkdir(parents=True, exist_ok=True)
    frames = int(cfg.run["frames"])
    eval_period = int(cfg.run["eval_period"])
    ckpt_period = int(cfg.run["checkpoint_period"])
    wall = bool(cfg.run["wall_clock"])

    if resume is not None:
        trial = Trial.load(resume, cfg)
        earlier = [r for r in read_curve(curve_path) if r.frame <= trial.frame] \
            if curve_path.exists() else []
    else:
        trial = Trial(cfg, kind, seed)
        earlier = []

    records = list(earlier)
    t0 = time.perf_counter()
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in earlier:
            writer.writerow(rec.row())
        fh.flush()
        try:
            while trial.frame < frames:
                trial.step()
                if trial.frame % eval_period == 0:
                    wall_ms = (time.perf_counter() - t0) * 1e3 if wall else float("nan")
                    rec = trial.make_record(wall_ms)
                    records.append(rec)
                    writer.writerow(rec.row())
                    fh.flush()
                if ckpt_period and trial.frame % ckpt_period == 0 and trial.frame < frames:
                    trial.save(ckpt_dir / f"{name}_frame{trial.frame}.ckpt")
        except (NonFiniteError, FloatingPointError) as exc:
            msg = f"trial {name} aborted at frame {trial.frame}: {exc}"
            log.error(msg)
            (out / "curves" / f"{name}.error.txt").write_text(msg + "\n")
            return TrialOutcome(kind, seed, records, msg)
    trial.save(ckpt_dir / f"{name}.ckpt")
    return TrialOutcome(kind, seed, records)


def _run_trial_task(args) -> TrialOutcome:
    cfg_dict, kind, seed, resume = args
    return run_trial(config_from_dict(cfg_dict), kind, seed, resume)


def random_policy_score(cfg: ExperimentConfig) -> float:
    """Discounted return of the uniform random policy, averaged over eval episodes and seeds."""
    gamma = float(cfg.rl["gamma"])
    returns = []
    for seed in cfg.run["seeds"]:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(RANDOM_POLICY_STREAM,)))
        env = make_environment(cfg.env_name, seed=rng, **cfg.env_params)
        for _ in range(int(cfg.run["eval_episodes"])):
            env.reset()
            rewards = []
            while not env.done:
                rewards.append(env.step(int(rng.integers(env.n_actions)))[1])
            returns.append(discounted_return(rewards, gamma))
    return math.fsum(returns) / len(returns)


def optimal_return(cfg: ExperimentConfig) -> float:
    env = make_environment(cfg.env_name, seed=0, **cfg.env_params)
    V, _ = value_iteration(env, float(cfg.rl["gamma"]))
    return float(V[env.start_index()])


def aggregate_curves(records: list[EvalRecord]) -> dict[str, np.ndarray]:
    """Mean and population standard deviation across seeds at each eval frame,
    plus a trailing moving average of the mean over up to four points."""
    by_seed: dict[int, dict[int, EvalRecord]] = {}
    for r in records:
        by_seed.setdefault(r.seed, {})[r.frame] = r
    if not by_seed:
        empty = np.zeros(0)
        return {c: empty for c in AGGREGATE_COLUMNS}
    frames = sorted(set.intersection(*(set(d) for d in by_seed.values())))
    seeds = sorted(by_seed)
    R = np.array([[by_seed[s][f].eval_return for s in seeds] for f in frames]).reshape(len(frames), len(seeds))
    G = np.array([[by_seed[s][f].grad_var_empirical for s in seeds] for f in frames]).reshape(len(frames), len(seeds))
    mean = R.mean(axis=1) if len(frames) else np.zeros(0)
    std = R.std(axis=1) if len(frames) else np.zeros(0)
    ma = np.array([mean[max(0, i - MOVING_AVERAGE_WINDOW + 1):i + 1].mean() for i in range(len(mean))])
    with np.errstate(all="ignore"):
        gv = np.array([np.nanmean(row) if np.isfinite(row).any() else np.nan for row in G])
    return {"frame": np.array(frames, dtype=np.int64), "mean_return": mean, "std_return": std,
            "moving_avg_4": ma, "n_trials": np.full(len(frames), len(seeds)), "mean_grad_var": gv}


def write_aggregate(agg: dict[str, np.ndarray], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for i in range(len(agg["frame"])):
            writer.writerow([_fmt(agg[c][i]) for c in AGGREGATE_COLUMNS])


def emit_curves(records_by_kind: dict[str, list[EvalRecord]], out_dir, figures: bool = True,
                title: str = "", optimal: Optional[float] = None) -> dict[str, dict]:
    """Write ``aggregate_<kind>.csv`` per optimizer and, optionally, the figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggregates = {}
    for kind, records in records_by_kind.items():
        agg = aggregate_curves(records)
        write_aggregate(agg, out / f"aggregate_{kind}.csv")
        aggregates[kind] = agg
    if figures and any(len(a["frame"]) for a in aggregates.values()):
        from .plotting import plot_gradient_variance, plot_learning_curves
        plot_learning_curves(aggregates, out / "figures" / "learning_curves.png", title, optimal)
        plot_gradient_variance({k: (a["frame"], a["mean_grad_var"]) for k, a in aggregates.items()},
                               out / "figures" / "gradient_variance.png", title)
    return aggregates


def area_under_curve(records: list[EvalRecord]) -> float:
    """Sum of eval returns times the eval spacing (rectangle rule from frame 0)."""
    total, prev = 0.0, 0
    for r in sorted(records, key=lambda r: r.frame):
        total += r.eval_return * (r.frame - prev)
        prev = r.frame
    return total


def frames_to_threshold(records: list[EvalRecord], threshold: float) -> float:
    """First eval frame at which the across-seed median return reaches ``threshold``."""
    by_frame: dict[int, list[float]] = {}
    for r in records:
        by_frame.setdefault(r.frame, []).append(r.eval_return)
    for frame in sorted(by_frame):
        if np.median(by_frame[frame]) >= threshold:
            return float(frame)
    return math.inf


@dataclass
class ExperimentResult:
    records: dict[str, list[EvalRecord]]
    summary: dict
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def build_summary(cfg: ExperimentConfig, records: dict[str, list[EvalRecord]]) -> dict:
    opt = optimal_return(cfg)
    summary = {"environment": cfg.env_name, "environment_params": cfg.env_params,
               "optimal_return": opt, "random_score": random_policy_score(cfg),
               "threshold_fraction": 0.95, "optimizers": {}}
    for kind, recs in records.items():
        by_seed: dict[int, list[EvalRecord]] = {}
        for r in recs:
            by_seed.setdefault(r.seed, []).append(r)
        aucs = {str(s): area_under_curve(rs) for s, rs in sorted(by_seed.items())}
        finals = [max(rs, key=lambda r: r.frame).eval_return for rs in by_seed.values() if rs]
        summary["optimizers"][kind] = {
            "auc": aucs,
            "median_auc": float(np.median(list(aucs.values()))) if aucs else float("nan"),
            "final_return": float(np.mean(finals)) if finals else float("nan"),
            "frames_to_95": frames_to_threshold(recs, 0.95 * opt),
        }
    return summary


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None,
                   resume: Optional[str] = None) -> ExperimentResult:
    """Run every (optimizer, seed) trial of ``cfg`` and write all artifacts.

    ``resume`` names a checkpoint file (or a directory of them); trials with
    a matching checkpoint continue from it, the rest start fresh.
    """
    out = Path(cfg.run["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    resume_map = _resume_map(resume)
    tasks = [(cfg.to_dict(), kind, int(seed), resume_map.get((kind, int(seed))))
             for kind in cfg.optimizer_kinds for seed in cfg.run["seeds"]]
    workers = int(workers or cfg.run["workers"])
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_trial_task, tasks))
    else:
        outcomes = [_run_trial_task(t) for t in tasks]
    records: dict[str, list[EvalRecord]] = {k: [] for k in cfg.optimizer_kinds}
    failures = []
    for o in outcomes:
        if o.error:
            failures.append(o.error)
        else:
            records[o.kind].extend(o.records)
    summary = build_summary(cfg, records)
    summary["aborted"] = failures
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
    emit_curves(records, out, bool(cfg.run["figures"]), cfg.env_name, summary["optimal_return"])
    return ExperimentResult(records, summary, failures)


def _resume_map(resume: Optional[str]) -> dict[tuple[str, int], str]:
    if resume is None:
        return {}
    path = Path(resume)
    files = sorted(path.glob("*.ckpt")) if path.is_dir() else [path]
    if not files:
        raise CheckpointError(f"no checkpoints found at {resume}")
    latest: dict[tuple[str, int], tuple[int, str]] = {}
    for f in files:
        trial = Trial.load(f)
        key = (trial.kind, trial.seed)
        if key not in latest or trial.frame > latest[key][0]:
            latest[key] = (trial.frame, str(f))
    return {k: v for k, (_, v) in latest.items()}


def normalized_score(agent: float, random_score: float, baseline: float) -> float:
    """``100 * (agent - random) / |baseline - random|``, in percent."""
    denom = abs(baseline - random_score)
    if not denom > 1e-12:
        raise UndefinedScoreError("baseline score equals random score")
    return 100.0 * (agent - random_score) / denom


def summarize_scores(scores: dict[str, dict[str, float]]) -> dict[str, dict[str, float]]:
    """Mean and median over environments of each optimizer's normalized score.

    ``scores`` maps optimizer -> {environment: normalized score}.
    """
    out = {}
    for kind, per_env in scores.items():
        vals = np.array(sorted(per_env.values()), dtype=np.float64)
        if vals.size == 0:
            continue
        out[kind] = {"mean": math.fsum(vals) / vals.size, "median": float(np.median(vals)),
                     "environments": len(vals)}
    return out


def summarize(inputs) -> dict:
    """Normalized scores across every ``summary.json`` found under ``inputs``.

    The Adam baseline plays the role of the reference agent in the
    normalization, so its own score is 100% whenever it beats random.
    """
    root = Path(inputs)
    files = sorted(root.rglob("summary.json"))
    if not files:
        raise FileNotFoundError(f"no summary.json under {root}")
    rows = []
    scores: dict[str, dict[str, float]] = {}
    for f in files:
        s = json.loads(f.read_text())
        env_label = f"{s['environment']}:{f.parent.name}"
        opts = s["optimizers"]
        if "adam-baseline" not in opts:
            log.warning("%s: no adam-baseline run, skipping", f)
            continue
        baseline = opts["adam-baseline"]["final_return"]
        for kind, o in sorted(opts.items()):
            try:
                score = normalized_score(o["final_return"], s["random_score"], baseline)
            except UndefinedScoreError:
                log.warning("%s: baseline equals random score, skipping", f)
                continue
            scores.setdefault(kind, {})[env_label] = score
            rows.append({"environment": env_label, "optimizer": kind,
                         "final_return": o["final_return"], "random_score": s["random_score"],
                         "baseline_score": baseline, "normalized_score": score})
    result = {"rows": rows, "summary": summarize_scores(scores)}
    buf = io.StringIO()
    writer = csv.DictWriter(buf, SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in row.items()})
    (root / "summary.csv").write_text(buf.getvalue())
    return result


def load_run_records(out_dir) -> dict[str, list[EvalRecord]]:
    records: dict[str, list[EvalRecord]] = {}
    for path in sorted(Path(out_dir, "curves").glob("*_seed*.csv")):
        kind = path.stem.rsplit("_seed", 1)[0]
        records.setdefault(kind, []).extend(read_curve(path))
    return records
