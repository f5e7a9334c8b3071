"""Tabular Q-learning on relabeled rewards for the discrete environments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def linear_epsilon(step: int, total_steps: int, start: float = 1.0, end: float = 0.05,
                   fraction: float = 0.2) -> float:
    """Linear decay from ``start`` to ``end`` over the first ``fraction`` of training."""
    horizon = max(1, int(fraction * total_steps))
    return end + (start - end) * max(0.0, 1.0 - step / horizon)


@dataclass
class QTable:
    n_states: int
    n_actions: int
    lr: float = 0.1
    gamma: float = 0.99
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros((self.n_states, self.n_actions))
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")

    def _check(self, *ids) -> None:
        for s in ids:
            if np.any((np.asarray(s) < 0) | (np.asarray(s) >= self.n_states)):
                raise IndexError(f"unknown state id {s}")

    def greedy(self, s: int) -> int:
        return int(np.argmax(self.values[s]))


def q_update(table: QTable, s: int, a: int, r: float, s_next: int, done: bool) -> float:
    """One TD(0) step; returns the TD error."""
    table._check(s, s_next)
    target = r + (0.0 if done else table.gamma * table.values[s_next].max())
    td = target - table.values[s, a]
    table.values[s, a] += table.lr * td
    if not np.isfinite(table.values[s, a]):
        raise FloatingPointError("Q-table entry became non-finite")
    return float(td)


def q_update_batch(table: QTable, s, a, r, s_next, done) -> None:
    """TD(0) on a minibatch: duplicate (s, a) pairs share the mean of their TD errors."""
    s, a, s_next = (np.asarray(x, dtype=np.int64) for x in (s, a, s_next))
    table._check(s, s_next)
    V = table.values
    target = np.asarray(r) + table.gamma * V[s_next].max(axis=1) * ~np.asarray(done, dtype=bool)
    td = target - V[s, a]
    flat = s * table.n_actions + a
    size = V.size
    tot = np.bincount(flat, weights=td, minlength=size)
    cnt = np.bincount(flat, minlength=size)
    hit = cnt > 0
    V.reshape(-1)[hit] += table.lr * tot[hit] / cnt[hit]


class QLearner:
    """epsilon-greedy tabular learner fed from the replay buffer."""

    discrete = True

    def __init__(self, n_states: int, n_actions: int, total_steps: int, lr: float = 0.1, gamma: float = 0.99,
                 batch_size: int = 64, eps_start: float = 1.0, eps_end: float = 0.05, eps_fraction: float = 0.2):
        self.table = QTable(n_states, n_actions, lr, gamma)
        self.total_steps = total_steps
        self.batch_size = batch_size
        self.eps = (eps_start, eps_end, eps_fraction)
        self.learning_start: int | None = None  # env step of the first update; the schedule runs from there

    def epsilon(self, step: int) -> float:
        if self.learning_start is None:
            return self.eps[0]
        span = max(1, self.total_steps - self.learning_start)
        return linear_epsilon(step - self.learning_start, span, *self.eps)

    def act(self, obs, sid: int, step: int, rng: np.random.Generator, explore: bool = True) -> int:
        if explore and rng.random() < self.epsilon(step):
            return int(rng.integers(self.table.n_actions))
        row = self.table.values[sid]
        best = np.flatnonzero(row == row.max())
        return int(best[0]) if not explore or len(best) == 1 else int(rng.choice(best))

    def start(self, step: int) -> None:
        if self.learning_start is None:
            self.learning_start = step

    def update(self, batch, rng: np.random.Generator) -> None:
        q_update_batch(self.table, batch.state_ids, batch.actions, batch.rewards, batch.next_state_ids, batch.dones)
