"""Q-learning pieces: replay buffer, epsilon-greedy exploration, target
network, DQN / Double-DQN targets, and the Bellman regression loss that feeds
per-sample gradients to the optimizers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .numeric import MlpNetwork, check_finite
from .optimizers import AdamState, SvrgConfig, adam_step, svr_dqn_outer_step

TARGET_RULES = ("dqn", "double")
OPTIMIZER_KINDS = ("adam-baseline", "svr-dqn")


class Transition(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    terminal: bool


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    def __len__(self):
        return self.actions.shape[0]

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "TransitionBatch":
        if len(transitions) == 0:
            raise ValueError("empty transition batch")
        return cls(
            np.array([t.s for t in transitions], dtype=np.float64),
            np.array([t.a for t in transitions], dtype=np.int64),
            np.array([t.r for t in transitions], dtype=np.float64),
            np.array([t.s_next for t in transitions], dtype=np.float64),
            np.array([t.terminal for t in transitions], dtype=bool),
        )

    def subset(self, ids) -> "TransitionBatch":
        return TransitionBatch(self.states[ids], self.actions[ids], self.rewards[ids],
                               self.next_states[ids], self.terminals[ids])

    def transitions(self) -> list[Transition]:
        return [Transition(self.states[i], int(self.actions[i]), float(self.rewards[i]),
                           self.next_states[i], bool(self.terminals[i]))
                for i in range(len(self))]


def _as_batch(batch) -> TransitionBatch:
    if isinstance(batch, TransitionBatch):
        return batch
    return TransitionBatch.from_transitions(list(batch))


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, tr: Transition) -> "ReplayBuffer":
        i = self.cursor
        self.states[i] = tr.s
        self.actions[i] = tr.a
        self.rewards[i] = tr.r
        self.next_states[i] = tr.s_next
        self.terminals[i] = tr.terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return self

    def _chronological(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (self.cursor + np.arange(self.capacity)) % self.capacity

    def batch(self, slots) -> TransitionBatch:
        slots = np.asarray(slots, dtype=np.int64)
        return TransitionBatch(self.states[slots].copy(), self.actions[slots].copy(),
                               self.rewards[slots].copy(), self.next_states[slots].copy(),
                               self.terminals[slots].copy())

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return self.batch(self._chronological()).transitions()

    def sample_batch(self, n: int, rng: np.random.Generator, replace: bool = True) -> TransitionBatch:
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        return self.batch(rng.choice(self.size, size=n, replace=replace))

    def sample(self, n: int, rng: np.random.Generator) -> list[Transition]:
        """``n`` transitions drawn uniformly with replacement."""
        return self.sample_batch(n, rng).transitions()

    def get_state(self, include_contents: bool) -> dict:
        state = {"capacity": self.capacity, "state_dim": self.state_dim,
                 "cursor": self.cursor, "size": self.size}
        if include_contents:
            state["arrays"] = {"states": self.states, "actions": self.actions,
                               "rewards": self.rewards, "next_states": self.next_states,
                               "terminals": self.terminals}
        return state

    def set_state(self, state: dict) -> None:
        arrays = state.get("arrays")
        if arrays is None:
            raise ValueError("checkpoint does not contain replay buffer contents")
        self.cursor = int(state["cursor"])
        self.size = int(state["size"])
        for name, value in arrays.items():
            setattr(self, name, np.array(value))


def buffer_push(buf: ReplayBuffer, tr: Transition) -> ReplayBuffer:
    return buf.push(tr)


def buffer_sample(buf: ReplayBuffer, n: int, rng: np.random.Generator) -> list[Transition]:
    return buf.sample(n, rng)


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear anneal from ``start`` to ``end`` over ``anneal_frames``, then flat."""

    start: float = 1.0
    end: float = 0.1
    anneal_frames: int = 1000

    def __post_init__(self):
        if not (0.0 <= self.start <= 1.0 and 0.0 <= self.end <= 1.0):
            raise ValueError("epsilon values must lie in [0, 1]")
        if self.anneal_frames < 1:
            raise ValueError("anneal_frames must be positive")

    def __call__(self, t: int) -> float:
        frac = min(max(t, 0) / self.anneal_frames, 1.0)
        return self.start + frac * (self.end - self.start)


def greedy_action(q_values: np.ndarray) -> int:
    # np.argmax returns the first maximiser, i.e. the lowest index on ties
    return int(np.argmax(q_values))


def epsilon_greedy_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    q_values = np.asarray(q_values)
    if q_values.size == 0:
        raise ValueError("no actions to choose from")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(q_values.size))
    return greedy_action(q_values)


@dataclass
class QLearner:
    online: MlpNetwork
    target: MlpNetwork
    gamma: float = 0.99
    sync_period: int = 250
    steps_since_sync: int = 0
    target_rule: str = "double"

    def __post_init__(self):
        if self.online.layer_sizes != self.target.layer_sizes:
            raise ValueError("online and target networks must share an architecture")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.sync_period < 1:
            raise ValueError("sync_period must be positive")
        if self.target_rule not in TARGET_RULES:
            raise ValueError(f"unknown target rule {self.target_rule!r}")

    @classmethod
    def create(cls, layer_sizes: Sequence[int], rng: np.random.Generator, activation: str = "relu",
               **kwargs) -> "QLearner":
        online = MlpNetwork.initialize(layer_sizes, rng, activation)
        return cls(online, online.copy(), **kwargs)

    def q_values(self, state: np.ndarray) -> np.ndarray:
        return self.online.forward(state)


def target_sync(learner: QLearner) -> QLearner:
    learner.target = learner.online.copy()
    learner.steps_since_sync = 0
    return learner


def bellman_targets(learner: QLearner, batch, rule: Optional[str] = None) -> np.ndarray:
    batch = _as_batch(batch)
    rule = rule or learner.target_rule
    q_target = learner.target.forward(batch.next_states)
    if rule == "dqn":
        bootstrap = q_target.max(axis=1)
    elif rule == "double":
        selected = np.argmax(learner.online.forward(batch.next_states), axis=1)
        bootstrap = q_target[np.arange(len(batch)), selected]
    else:
        raise ValueError(f"unknown target rule {rule!r}")
    return batch.rewards + np.where(batch.terminals, 0.0, learner.gamma * bootstrap)


def dqn_target(learner: QLearner, tr: Transition) -> float:
    return float(bellman_targets(learner, [tr], "dqn")[0])


def double_q_target(learner: QLearner, tr: Transition) -> float:
    return float(bellman_targets(learner, [tr], "double")[0])


def regression_loss_and_grads(net: MlpNetwork, states: np.ndarray, actions: np.ndarray,
                              targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample squared errors ``(y_i - Q(s_i, a_i))^2`` and their gradients."""
    q, _ = net.forward_cached(states)
    rows = np.arange(actions.shape[0])
    residual = targets - q[rows, actions]
    upstream = np.zeros_like(q)
    upstream[rows, actions] = -2.0 * residual
    return residual ** 2, net.per_sample_gradients(states, upstream)


def bellman_loss_and_grads(learner: QLearner, batch, target_rule: Optional[str] = None
                           ) -> tuple[float, np.ndarray]:
    """Mean squared Bellman error and per-sample semi-gradients w.r.t. the online weights.

    Targets are constants: no gradient flows through the target network.
    """
    batch = _as_batch(batch)
    targets = bellman_targets(learner, batch, target_rule)
    losses, grads = regression_loss_and_grads(learner.online, batch.states, batch.actions, targets)
    return float(losses.mean()), grads


def bellman_grad_fn(learner: QLearner, batch: TransitionBatch, target_rule: Optional[str] = None):
    """Per-sample gradient function over ``batch`` with targets frozen at the current weights."""
    targets = bellman_targets(learner, batch, target_rule)
    template = learner.online

    def grad_fn(w, ids):
        net = template.with_weights(w)
        _, grads = regression_loss_and_grads(net, batch.states[ids], batch.actions[ids], targets[ids])
        return grads

    return grad_fn, targets


@dataclass
class OptimizerState:
    kind: str
    adam: AdamState
    svrg: SvrgConfig = field(default_factory=SvrgConfig)

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}")


class IterationResult(NamedTuple):
    loss: float
    skipped: bool
    gradient: Optional[np.ndarray]


def train_iteration(learner: QLearner, buffer: ReplayBuffer, opt: OptimizerState,
                    rng: np.random.Generator) -> IterationResult:
    """One optimisation step on the Bellman loss; updates ``learner`` and ``opt`` in place.

    Both paths draw ``B`` transitions without replacement from the buffer.
    The baseline applies Adam to their mean gradient; SVR-DQN runs a full
    outer step over them. Returns a skipped result when the buffer holds
    fewer than ``B`` transitions.
    """
    B = opt.svrg.B
    if len(buffer) < B:
        return IterationResult(float("nan"), True, None)
    batch = buffer.sample_batch(B, rng, replace=False)
    grad_fn, targets = bellman_grad_fn(learner, batch)
    w = learner.online.weights
    if opt.kind == "adam-baseline":
        losses, grads = regression_loss_and_grads(learner.online, batch.states, batch.actions, targets)
        g = grads.mean(axis=0)
        w_new, opt.adam = adam_step(opt.adam, w, g)
        loss = float(losses.mean())
    else:
        q = learner.online.forward(batch.states)
        loss = float(np.mean((targets - q[np.arange(B), batch.actions]) ** 2))
        w_new, opt.adam, g = svr_dqn_outer_step(w, opt.svrg, opt.adam, grad_fn, B, rng)
    learner.online = learner.online.with_weights(check_finite(w_new, "online weights"))
    learner.steps_since_sync += 1
    if learner.steps_since_sync >= learner.sync_period:
        target_sync(learner)
    return IterationResult(loss, False, g)
