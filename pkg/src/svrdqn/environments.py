"""Small decision problems with known optima and synthetic finite-sum objectives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

EPISODE_CAP = 200


class Environment:
    """Episodic MDP with one-hot (or low-dimensional) real-vector states.

    Subclasses implement ``_step_index`` and ``transition_model``. ``step``
    returns ``(state, reward, terminal)``; ``truncated`` is set when the
    episode hits ``episode_cap`` without reaching a terminal state.
    """

    n_states: int
    n_actions: int

    def __init__(self, seed=None, episode_cap: int = EPISODE_CAP):
        self.episode_cap = int(episode_cap)
        self.rng = np.random.default_rng(seed)
        self.position: Optional[int] = None
        self.steps = 0
        self.terminal = False
        self.truncated = False

    @property
    def state_dim(self) -> int:
        return self.n_states

    def encode(self, index: int) -> np.ndarray:
        s = np.zeros(self.n_states)
        s[index] = 1.0
        return s

    def start_index(self) -> int:
        raise NotImplementedError

    def reset(self) -> np.ndarray:
        self.position = self.start_index()
        self.steps = 0
        self.terminal = False
        self.truncated = False
        return self.encode(self.position)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self.position is None:
            raise RuntimeError("call reset() before step()")
        if self.terminal or self.truncated:
            raise RuntimeError("episode is over; call reset() before stepping again")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} outside [0, {self.n_actions})")
        self.position, reward, self.terminal = self._step_index(self.position, int(action))
        self.steps += 1
        if not self.terminal and self.steps >= self.episode_cap:
            self.truncated = True
        return self.encode(self.position), reward, self.terminal

    @property
    def done(self) -> bool:
        return self.terminal or self.truncated

    def _step_index(self, index: int, action: int) -> tuple[int, float, bool]:
        raise NotImplementedError

    def transition_model(self, index: int, action: int) -> list[tuple[float, int, float, bool]]:
        """``(probability, next_index, expected_reward, terminal)`` outcomes."""
        raise NotImplementedError

    def is_terminal_index(self, index: int) -> bool:
        raise NotImplementedError

    def get_state(self) -> dict:
        return {
            "position": self.position,
            "steps": self.steps,
            "terminal": self.terminal,
            "truncated": self.truncated,
            "rng": self.rng.bit_generator.state,
        }

    def set_state(self, state: dict) -> None:
        self.position = state["position"]
        self.steps = state["steps"]
        self.terminal = state["terminal"]
        self.truncated = state["truncated"]
        self.rng.bit_generator.state = state["rng"]


class GridWorld(Environment):
    """``size x size`` grid. Reward +1 entering the goal, -1 entering a pit
    (both terminal), 0 otherwise. Actions: 0 up, 1 right, 2 down, 3 left;
    bumping a wall leaves the agent in place. With ``slip_prob`` the chosen
    action is replaced by a uniformly random one."""

    MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
    n_actions = 4

    def __init__(self, size: int = 4, goal=None, pits: Sequence = (), slip_prob: float = 0.0,
                 start=(0, 0), seed=None, episode_cap: int = EPISODE_CAP):
        if size < 2:
            raise ValueError("grid size must be at least 2")
        if not 0.0 <= slip_prob <= 1.0:
            raise ValueError("slip_prob must lie in [0, 1]")
        super().__init__(seed, episode_cap)
        self.size = int(size)
        self.n_states = self.size * self.size
        goal = (self.size - 1, self.size - 1) if goal is None else goal
        self.goal = self._cell(goal, "goal")
        self.pits = frozenset(self._cell(p, "pit") for p in pits)
        self.start = self._cell(start, "start")
        if self.goal in self.pits:
            raise ValueError("goal cannot also be a pit")
        if self.start == self.goal or self.start in self.pits:
            raise ValueError("start cell must not be terminal")
        self.slip_prob = float(slip_prob)

    def _cell(self, rc, what: str) -> int:
        r, c = (int(v) for v in rc)
        if not (0 <= r < self.size and 0 <= c < self.size):
            raise ValueError(f"{what} {tuple(rc)} lies outside the {self.size}x{self.size} grid")
        return r * self.size + c

    def start_index(self) -> int:
        return self.start

    def is_terminal_index(self, index: int) -> bool:
        return index == self.goal or index in self.pits

    def _move(self, index: int, action: int) -> int:
        r, c = divmod(index, self.size)
        dr, dc = self.MOVES[action]
        r = min(max(r + dr, 0), self.size - 1)
        c = min(max(c + dc, 0), self.size - 1)
        return r * self.size + c

    def _outcome(self, nxt: int) -> tuple[float, bool]:
        if nxt == self.goal:
            return 1.0, True
        if nxt in self.pits:
            return -1.0, True
        return 0.0, False

    def _step_index(self, index, action):
        if self.slip_prob > 0.0 and self.rng.random() < self.slip_prob:
            action = int(self.rng.integers(self.n_actions))
        nxt = self._move(index, action)
        reward, terminal = self._outcome(nxt)
        return nxt, reward, terminal

    def transition_model(self, index, action):
        probs = np.full(self.n_actions, self.slip_prob / self.n_actions)
        probs[action] += 1.0 - self.slip_prob
        out = []
        for a, p in enumerate(probs):
            if p > 0:
                nxt = self._move(index, a)
                out.append((float(p), nxt, *self._outcome(nxt)))
        return out


class StochasticChain(Environment):
    """1-D chain of ``length`` states starting at ``start``. Action 0 moves
    left, 1 moves right. Entering state 0 pays ``left_reward`` (small,
    deterministic); entering the right end pays ``right_reward`` plus uniform
    noise on ``[-noise, noise]``. Both ends are terminal."""

    n_actions = 2

    def __init__(self, length: int = 6, noise: float = 0.2, start: int = 1,
                 left_reward: float = 0.1, right_reward: float = 1.0,
                 seed=None, episode_cap: int = EPISODE_CAP):
        if length < 3:
            raise ValueError("chain length must be at least 3")
        if not 0 < start < length - 1:
            raise ValueError("start must be an interior state")
        if noise < 0:
            raise ValueError("noise must be non-negative")
        super().__init__(seed, episode_cap)
        self.length = int(length)
        self.n_states = self.length
        self.noise = float(noise)
        self.start = int(start)
        self.left_reward = float(left_reward)
        self.right_reward = float(right_reward)

    def start_index(self) -> int:
        return self.start

    def is_terminal_index(self, index: int) -> bool:
        return index == 0 or index == self.length - 1

    def _step_index(self, index, action):
        nxt = index - 1 if action == 0 else index + 1
        if nxt == 0:
            return nxt, self.left_reward, True
        if nxt == self.length - 1:
            jitter = self.rng.uniform(-self.noise, self.noise) if self.noise > 0 else 0.0
            return nxt, self.right_reward + jitter, True
        return nxt, 0.0, False

    def transition_model(self, index, action):
        nxt = index - 1 if action == 0 else index + 1
        if nxt == 0:
            return [(1.0, nxt, self.left_reward, True)]
        if nxt == self.length - 1:
            return [(1.0, nxt, self.right_reward, True)]
        return [(1.0, nxt, 0.0, False)]

    def always_right_value(self, gamma: float) -> float:
        return gamma ** (self.length - 2 - self.start) * self.right_reward

    def always_left_value(self, gamma: float) -> float:
        return gamma ** (self.start - 1) * self.left_reward


def gridworld(size: int = 4, goal=None, pits: Sequence = (), slip_prob: float = 0.0,
              **kwargs) -> GridWorld:
    return GridWorld(size, goal, pits, slip_prob, **kwargs)


def stochastic_chain(length: int = 6, noise: float = 0.2, **kwargs) -> StochasticChain:
    return StochasticChain(length, noise, **kwargs)


def value_iteration(env: Environment, gamma: float, tol: float = 1e-12,
                    max_iter: int = 100_000) -> tuple[np.ndarray, np.ndarray]:
    """Optimal state values and action values of ``env`` (terminal states have value 0)."""
    V = np.zeros(env.n_states)
    model = {(s, a): env.transition_model(s, a)
             for s in range(env.n_states) if not env.is_terminal_index(s)
             for a in range(env.n_actions)}
    Q = np.zeros((env.n_states, env.n_actions))
    for _ in range(max_iter):
        for (s, a), outcomes in model.items():
            Q[s, a] = sum(p * (r + (0.0 if term else gamma * V[nxt]))
                          for p, nxt, r, term in outcomes)
        V_new = np.where([env.is_terminal_index(s) for s in range(env.n_states)], 0.0, Q.max(axis=1))
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    return V, Q


def optimal_actions(env: Environment, gamma: float, atol: float = 1e-9) -> dict[int, set[int]]:
    """Set of optimal actions for each non-terminal state."""
    _, Q = value_iteration(env, gamma)
    out = {}
    for s in range(env.n_states):
        if env.is_terminal_index(s):
            continue
        best = Q[s].max()
        out[s] = {a for a in range(env.n_actions) if Q[s, a] >= best - atol}
    return out


def make_environment(name: str, seed=None, **params) -> Environment:
    if name == "gridworld":
        return GridWorld(seed=seed, **params)
    if name == "chain":
        return StochasticChain(seed=seed, **params)
    raise ValueError(f"unknown environment {name!r}")


@dataclass
class FiniteSumProblem:
    """``f(w) = (1/n) sum_i f_i(w)`` with per-sample losses and gradients.

    ``losses(w, ids)`` returns ``f_i(w)`` for each id, ``grads(w, ids)`` the
    matching ``(len(ids), dim)`` gradient rows. ``w_star``, ``f_star`` and
    ``L`` (Lipschitz constant of every ``grad f_i``) are ``None`` when unknown.
    """

    n: int
    dim: int
    losses: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grads: Callable[[np.ndarray, np.ndarray], np.ndarray]
    w_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    L: Optional[float] = None
    name: str = "finite-sum"

    @property
    def all_ids(self) -> np.ndarray:
        return np.arange(self.n)

    def f(self, w: np.ndarray) -> float:
        return float(self.losses(w, self.all_ids).mean())

    def full_grad(self, w: np.ndarray) -> np.ndarray:
        return self.grads(w, self.all_ids).mean(axis=0)

    def suboptimality(self, w: np.ndarray) -> float:
        if self.f_star is None:
            raise ValueError(f"{self.name}: optimum unknown")
        return self.f(w) - self.f_star


def quadratic_finite_sum(a) -> FiniteSumProblem:
    """``f_i(w) = 0.5 * ||w - a_i||^2``; optimum at the mean of the ``a_i``, L = 1."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if a.shape[0] < 1:
        raise ValueError("need at least one sample")
    n, dim = a.shape

    def losses(w, ids):
        d = w[None, :] - a[ids]
        return 0.5 * np.einsum("ij,ij->i", d, d)

    def grads(w, ids):
        return w[None, :] - a[ids]

    w_star = a.mean(axis=0)
    f_star = float(losses(w_star, np.arange(n)).mean())
    return FiniteSumProblem(n, dim, losses, grads, w_star, f_star, 1.0, "quadratic")


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def logistic_finite_sum(features, labels, lam: float) -> FiniteSumProblem:
    """L2-regularised logistic loss ``log(1 + exp(-y_i x_i.w)) + lam/2 ||w||^2``.

    The minimiser is computed by full-batch Newton iterations when ``lam > 0``.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError("labels must have one entry per feature row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if lam < 0:
        raise ValueError("regulariser must be non-negative")
    n, dim = X.shape

    def losses(w, ids):
        margins = y[ids] * (X[ids] @ w)
        return _log1pexp(-margins) + 0.5 * lam * float(w @ w)

    def grads(w, ids):
        margins = y[ids] * (X[ids] @ w)
        # sigmoid(-margin) written to stay finite for large |margin|
        weight = np.exp(-_log1pexp(margins))
        return -(weight * y[ids])[:, None] * X[ids] + lam * w[None, :]

    L = lam + float(np.max(np.einsum("ij,ij->i", X, X))) / 4.0
    problem = FiniteSumProblem(n, dim, losses, grads, None, None, L, "logistic")
    if lam > 0:
        problem.w_star = _newton_minimise(X, y, lam)
        problem.f_star = problem.f(problem.w_star)
    return problem


def _newton_minimise(X, y, lam, tol=1e-13, max_iter=200):
    n, dim = X.shape

    def objective(w):
        return float(_log1pexp(-y * (X @ w)).mean() + 0.5 * lam * w @ w)

    w = np.zeros(dim)
    for _ in range(max_iter):
        margins = y * (X @ w)
        s = np.exp(-_log1pexp(margins))
        grad = -(X.T @ (s * y)) / n + lam * w
        if np.linalg.norm(grad) < tol:
            break
        curvature = s * (1.0 - s)
        H = (X.T * curvature) @ X / n + lam * np.eye(dim)
        step = np.linalg.solve(H, grad)
        t, f0, slope = 1.0, objective(w), float(grad @ step)
        while t > 1e-10 and objective(w - t * step) > f0 - 1e-4 * t * slope:
            t *= 0.5
        w = w - t * step
    return w
