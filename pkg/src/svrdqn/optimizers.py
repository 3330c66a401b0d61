"""Minibatch SGD, Adam, SVRG, and the SVR-DQN outer step that feeds an
SVRG displacement into Adam.

All optimizers work on flat float64 parameter vectors. Per-sample gradients
are supplied by a callable ``grad_fn(w, ids) -> ndarray (len(ids), P)``,
where ``ids`` index the training samples of a finite-sum objective.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .numeric import check_finite

GradFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, dim: int, alpha: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        if not alpha > 0:
            raise ValueError("Adam step size must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("Adam decay rates must lie in [0, 1)")
        if epsilon < 0:
            raise ValueError("Adam epsilon must be non-negative")
        return cls(np.zeros(dim), np.zeros(dim), 0, alpha, beta1, beta2, epsilon)


@dataclass(frozen=True)
class SvrgConfig:
    """Inner learning rate ``eta``, ``m`` inner steps of minibatch size ``b``,
    anchor batch of ``B`` samples. Requires ``b <= B`` and ``b * m >= B``."""

    B: int = 512
    b: int = 32
    m: int = 32
    eta: float = 0.01

    def __post_init__(self):
        if self.B < 1 or self.b < 1 or self.m < 1:
            raise ValueError(f"B, b, m must be >= 1 (got B={self.B}, b={self.b}, m={self.m})")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.b > self.B:
            raise ValueError(f"minibatch size b={self.b} exceeds anchor batch B={self.B}")
        if self.b * self.m < self.B:
            raise ValueError(f"b*m = {self.b * self.m} < B = {self.B}: inner loop cannot "
                             "cover the anchor batch")


@dataclass(frozen=True)
class SvrgSnapshot:
    w_tilde: np.ndarray
    mu: np.ndarray
    batch: np.ndarray


def sgd_minibatch_step(w: np.ndarray, grads, eta: float) -> np.ndarray:
    grads = np.asarray(grads, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] == 0:
        raise ValueError("sgd step needs a non-empty batch of gradients")
    if grads.shape[1] != w.shape[0]:
        raise ValueError(f"gradient width {grads.shape[1]} != parameter length {w.shape[0]}")
    return w - eta * grads.mean(axis=0)


def adam_step(state: AdamState, w: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, AdamState]:
    if not (w.shape == g.shape == state.m.shape):
        raise ValueError(f"shape mismatch: w {w.shape}, g {g.shape}, state {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * g
    v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    denom = np.sqrt(v_hat) + state.epsilon
    # zero gradient with zero history gives 0/0 when epsilon is 0
    step = np.divide(m_hat, denom, out=np.zeros_like(m_hat), where=denom > 0)
    return w - state.alpha * step, replace(state, m=m, v=v, t=t)


def svrg_anchor(grad_fn: GradFn, w_tilde: np.ndarray, batch) -> SvrgSnapshot:
    """Average per-sample gradient over ``batch`` at the snapshot ``w_tilde``."""
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("anchor batch is empty")
    mu = grad_fn(w_tilde, batch).mean(axis=0)
    return SvrgSnapshot(w_tilde.copy(), mu, batch)


def svrg_direction(w: np.ndarray, snapshot: SvrgSnapshot, minibatch, grad_fn: GradFn) -> np.ndarray:
    minibatch = np.asarray(minibatch, dtype=np.int64)
    if minibatch.size == 0:
        raise ValueError("minibatch is empty")
    return (grad_fn(w, minibatch).mean(axis=0)
            - grad_fn(snapshot.w_tilde, minibatch).mean(axis=0)
            + snapshot.mu)


def svrg_inner_step(w: np.ndarray, snapshot: SvrgSnapshot, minibatch, eta: float,
                    grad_fn: GradFn) -> np.ndarray:
    return w - eta * svrg_direction(w, snapshot, minibatch, grad_fn)


def composite_gradient_no_rescale_check(g: np.ndarray) -> np.ndarray:
    # Adam's step is invariant to gradient scale, so the displacement goes in unnormalized
    return g


def svr_dqn_outer_step(w_tilde: np.ndarray, cfg: SvrgConfig, adam: AdamState, grad_fn: GradFn,
                       n_samples: int, rng: np.random.Generator,
                       inner_trace: list | None = None) -> tuple[np.ndarray, AdamState, np.ndarray]:
    """One SVR-DQN iteration from snapshot ``w_tilde``.

    Draws an anchor batch of ``cfg.B`` ids without replacement from
    ``range(n_samples)``, runs ``cfg.m`` variance-reduced inner steps on
    minibatches drawn with replacement from that batch, and hands the negated
    displacement ``w_tilde - w_m`` to Adam as its gradient.

    Returns the new snapshot, the new Adam state and the surrogate gradient.
    If ``inner_trace`` is a list, the inner iterates ``w_0 .. w_m`` are
    appended to it.
    """
    if n_samples < cfg.B:
        raise ValueError(f"need at least B={cfg.B} samples, have {n_samples}")
    batch = rng.choice(n_samples, size=cfg.B, replace=False)
    snapshot = svrg_anchor(grad_fn, w_tilde, batch)
    w = w_tilde.copy()
    if inner_trace is not None:
        inner_trace.append(w.copy())
    for _ in range(cfg.m):
        minibatch = batch[rng.integers(0, cfg.B, size=cfg.b)]
        w = svrg_inner_step(w, snapshot, minibatch, cfg.eta, grad_fn)
        if inner_trace is not None:
            inner_trace.append(w.copy())
    check_finite(w, "SVRG inner iterate")
    # w_m - w_tilde points downhill; Adam subtracts its input, so pass the negation
    g = composite_gradient_no_rescale_check(w_tilde - w)
    w_new, adam = adam_step(adam, w_tilde, g)
    check_finite(w_new, "SVR-DQN parameters")
    return w_new, adam, g
