"""Empirical variance of stochastic gradient estimators and the AGE variance
bounds they are checked against.

The variance of a vector estimator is its trace-variance: the sum over
coordinates of the unbiased per-coordinate sample variance across
independent draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Callable, Iterable, Optional

import numpy as np

from .environments import FiniteSumProblem
from .optimizers import AdamState, SvrgConfig, svr_dqn_outer_step

Estimator = Callable[[np.ndarray, np.random.Generator], np.ndarray]

SVR_DQN = "svr-dqn"
DOUBLE_DQN = "double-dqn-minibatch"
SE_SLACK = 3.0


class UnsupportedProblemError(ValueError):
    """The problem lacks a known optimum or Lipschitz constant."""


@dataclass
class VarianceReport:
    estimator: str
    empirical_var: float
    standard_error: float
    trials: int
    bound: float = float("nan")
    subopt: float = float("nan")
    iteration: int = 0

    def __post_init__(self):
        if self.trials < 2:
            raise ValueError("a variance estimate needs at least two trials")
        if self.empirical_var < 0:
            raise ValueError("empirical variance cannot be negative")

    @property
    def margin(self) -> float:
        return self.bound - self.empirical_var

    @property
    def passed(self) -> bool:
        return self.empirical_var <= self.bound + SE_SLACK * self.standard_error

    def csv_row(self) -> dict:
        return {"iteration": self.iteration, "estimator": self.estimator,
                "empirical_var": self.empirical_var, "bound": self.bound,
                "subopt": self.subopt, "trials": self.trials, "pass": self.passed}

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(margin=self.margin, passed=self.passed)
        return d


def trace_variance(samples: np.ndarray) -> tuple[float, float]:
    """Trace of the unbiased sample covariance of the rows of ``samples`` and
    its standard error. Sums use ``math.fsum`` so the result does not depend
    on the order in which trials were produced."""
    samples = np.asarray(samples, dtype=np.float64)
    T = samples.shape[0]
    if T < 2:
        raise ValueError("need at least two samples")
    mean = np.array([math.fsum(col) for col in samples.T]) / T
    dev = samples - mean
    sq = np.einsum("ij,ij->i", dev, dev)
    var = math.fsum(sq) / (T - 1)
    # per-trial contributions fluctuate with std(sq); the estimate averages T of them
    se = float(np.std(sq, ddof=1)) / math.sqrt(T) * T / (T - 1)
    return var, se


def empirical_gradient_variance(estimator: Estimator, w_tilde: np.ndarray, trials: int,
                                rng: np.random.Generator, tag: str = "estimator") -> VarianceReport:
    if trials < 2:
        raise ValueError("trials must be at least 2")
    draws = np.stack([estimator(w_tilde, rng) for _ in range(trials)])
    var, se = trace_variance(draws)
    return VarianceReport(tag, var, se, trials)


def single_sample_estimator(problem: FiniteSumProblem) -> Estimator:
    def draw(w, rng):
        return problem.grads(w, rng.integers(problem.n, size=1))[0]
    return draw


def minibatch_estimator(problem: FiniteSumProblem, size: int, age: bool = False) -> Estimator:
    """Mean of ``size`` per-sample gradients drawn uniformly with replacement.

    With ``age=True`` each gradient is replaced by its approximation gradient
    error ``grad f_i(w) - grad f_i(w*)``.
    """
    if age and problem.w_star is None:
        raise UnsupportedProblemError(f"{problem.name}: optimum unknown")

    def draw(w, rng):
        ids = rng.integers(problem.n, size=size)
        g = problem.grads(w, ids)
        if age:
            g = g - problem.grads(problem.w_star, ids)
        return g.mean(axis=0)
    return draw


def svr_dqn_estimator(problem: FiniteSumProblem, cfg: SvrgConfig) -> Estimator:
    """Surrogate gradient ``w_tilde - w_m`` produced by one SVR-DQN outer step.

    The anchor batch holds ``cfg.B`` ids drawn without replacement from the
    ``problem.n`` samples; when ``cfg.B == problem.n`` the anchor is the full
    gradient.
    """
    def draw(w, rng):
        _, _, g = svr_dqn_outer_step(w, cfg, AdamState.zeros(problem.dim), problem.grads,
                                     problem.n, rng)
        return g
    return draw


def sgd_displacement_estimator(problem: FiniteSumProblem, cfg: SvrgConfig) -> Estimator:
    """``w_tilde - w_m`` after ``cfg.m`` plain minibatch SGD steps, the
    uncorrected counterpart of :func:`svr_dqn_estimator` with the same
    per-draw sample budget."""
    def draw(w, rng):
        batch = rng.choice(problem.n, size=cfg.B, replace=False)
        x = w.copy()
        for _ in range(cfg.m):
            ids = batch[rng.integers(0, cfg.B, size=cfg.b)]
            x = x - cfg.eta * problem.grads(x, ids).mean(axis=0)
        return w - x
    return draw


def _check_bound_args(L: float, subopt: float):
    if not L > 0:
        raise ValueError("Lipschitz constant must be positive")
    if subopt < 0:
        raise ValueError("suboptimality must be non-negative")


def svr_dqn_variance_bound(cfg: SvrgConfig, L: float, subopt: float) -> float:
    """``(8 L m eta^2 / b) * (f(w_tilde) - f(w*))``."""
    _check_bound_args(L, subopt)
    return 8.0 * L * cfg.m * cfg.eta ** 2 * subopt / cfg.b


def double_dqn_variance_bound(B: int, L: float, subopt: float) -> float:
    """``(2 L / B) * (f(w_tilde) - f(w*))``."""
    _check_bound_args(L, subopt)
    if B < 1:
        raise ValueError("batch size must be positive")
    return 2.0 * L * subopt / B


def _require_optimum(problem: FiniteSumProblem):
    if problem.w_star is None or problem.f_star is None or problem.L is None:
        raise UnsupportedProblemError(f"{problem.name}: needs known w*, f(w*) and L")


@dataclass
class LipschitzCheck:
    holds: bool
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def lipschitz_suboptimality_bound_check(problem: FiniteSumProblem, w_tilde: np.ndarray,
                                        slack: float = 1e-9) -> LipschitzCheck:
    """Compare ``(1/n) sum ||grad f_i(w) - grad f_i(w*)||^2`` with ``2 L (f(w) - f(w*))``."""
    _require_optimum(problem)
    ids = problem.all_ids
    diff = problem.grads(w_tilde, ids) - problem.grads(problem.w_star, ids)
    lhs = math.fsum(np.einsum("ij,ij->i", diff, diff)) / problem.n
    rhs = 2.0 * problem.L * (problem.f(w_tilde) - problem.f_star)
    return LipschitzCheck(lhs <= rhs + slack, lhs, rhs)


def bound_verification_sweep(problem: FiniteSumProblem, cfg: SvrgConfig, trials: int,
                             points: Iterable[np.ndarray], rng: np.random.Generator
                             ) -> list[VarianceReport]:
    """Empirical variance of both estimators against their bounds at each point.

    The Double-DQN estimator averages ``cfg.B`` approximation gradient errors
    drawn with replacement; the SVR-DQN estimator is the outer-step surrogate.
    """
    _require_optimum(problem)
    svr = svr_dqn_estimator(problem, cfg)
    ddqn = minibatch_estimator(problem, cfg.B, age=True)
    reports = []
    for it, w in enumerate(points):
        # clamp round-off below the optimum value
        subopt = max(problem.suboptimality(w), 0.0)
        for tag, est, bound in (
            (SVR_DQN, svr, svr_dqn_variance_bound(cfg, problem.L, subopt)),
            (DOUBLE_DQN, ddqn, double_dqn_variance_bound(cfg.B, problem.L, subopt)),
        ):
            rep = empirical_gradient_variance(est, w, trials, rng, tag)
            rep.bound, rep.subopt, rep.iteration = bound, subopt, it
            reports.append(rep)
    return reports


@dataclass
class TelescopingStats:
    var_total: float
    sum_var_terms: float
    cross_covariance: float


def telescoping_variance(problem: FiniteSumProblem, cfg: SvrgConfig, w_tilde: np.ndarray,
                         trials: int, rng: np.random.Generator) -> TelescopingStats:
    """Split ``Var(w_m - w_tilde)`` into the per-inner-step variances and the
    remaining cross-covariance between inner steps."""
    totals, terms = [], []
    for _ in range(trials):
        trace: list = []
        svr_dqn_outer_step(w_tilde, cfg, AdamState.zeros(problem.dim), problem.grads,
                           problem.n, rng, inner_trace=trace)
        steps = np.diff(np.stack(trace), axis=0)
        terms.append(steps)
        totals.append(trace[-1] - trace[0])
    var_total, _ = trace_variance(np.stack(totals))
    terms = np.stack(terms)
    sum_terms = math.fsum(trace_variance(terms[:, i, :])[0] for i in range(cfg.m))
    return TelescopingStats(var_total, sum_terms, var_total - sum_terms)


def sweep_passed(reports: Iterable[VarianceReport]) -> bool:
    return all(r.passed for r in reports)


def sigma_squared(problem: FiniteSumProblem, w: np.ndarray, trials: int,
                  rng: np.random.Generator) -> VarianceReport:
    """Single-sample gradient variance at ``w``."""
    return empirical_gradient_variance(single_sample_estimator(problem), w, trials, rng,
                                       "single-sample")
