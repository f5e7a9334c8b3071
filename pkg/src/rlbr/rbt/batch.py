"""Training windows aligned to bag starts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..envlab import BagLayout


class BagTrajectory(NamedTuple):
    """What the reward model may see of one stored trajectory."""

    states: np.ndarray  # [T, ds]
    actions: np.ndarray  # [T, da] (features: one-hot for discrete actions)
    next_states: np.ndarray  # [T, ds]
    dones: np.ndarray  # [T] bool
    layout: BagLayout
    bag_rewards: np.ndarray  # [n_bags]


@dataclass
class BagBatch:
    states: np.ndarray  # [B, L, ds]
    actions: np.ndarray  # [B, L, da]
    next_states: np.ndarray  # [B, L, ds]
    step_mask: np.ndarray  # [B, L] valid (non-padding) steps
    state_mask: np.ndarray  # [B, L] steps with a successor to predict
    bag_window: np.ndarray  # [n_bags] window index of each bag
    bag_start: np.ndarray  # [n_bags] start inside the window
    bag_len: np.ndarray  # [n_bags]
    bag_rewards: np.ndarray  # [n_bags]

    @property
    def n_bags(self) -> int:
        return len(self.bag_rewards)

    def __len__(self) -> int:
        return self.states.shape[0]

    def bag_matrix(self) -> np.ndarray:
        """[n_bags, B * L] indicator so that bag sums = G @ r.ravel()."""
        B, L = self.step_mask.shape
        G = np.zeros((self.n_bags, B * L))
        for j, (w, s, n) in enumerate(zip(self.bag_window, self.bag_start, self.bag_len)):
            G[j, w * L + s: w * L + s + n] = 1.0
        return G


def window_for(traj: BagTrajectory, bag_index: int, seq_len: int, max_len: int) -> tuple[int, int]:
    """[start, end) of the window opened at a bag start; it stretches to cover that bag when
    the bag is longer than ``seq_len`` (up to ``max_len`` positions)."""
    bag = traj.layout.bags[bag_index]
    T = len(traj.states)
    length = min(max(seq_len, bag.length), max_len)
    return bag.start, min(bag.start + length, T)


def make_window_batch(trajs: Sequence[BagTrajectory], windows: Sequence[tuple[int, int, int]]) -> BagBatch:
    """Assemble (trajectory index, start, end) windows into a right-padded batch.

    Only bags lying entirely inside a window enter the reward loss for it.
    """
    L = max(e - s for _, s, e in windows)
    B = len(windows)
    t0 = trajs[windows[0][0]]
    ds, da = t0.states.shape[1], t0.actions.shape[1]
    states = np.zeros((B, L, ds))
    actions = np.zeros((B, L, da))
    nexts = np.zeros((B, L, ds))
    step_mask = np.zeros((B, L), dtype=bool)
    state_mask = np.zeros((B, L), dtype=bool)
    bw, bs, bl, br = [], [], [], []
    for w, (i, s, e) in enumerate(windows):
        tr = trajs[i]
        n = e - s
        states[w, :n] = tr.states[s:e]
        actions[w, :n] = tr.actions[s:e]
        nexts[w, :n] = tr.next_states[s:e]
        step_mask[w, :n] = True
        state_mask[w, :n] = ~tr.dones[s:e]
        for bag, R in zip(tr.layout.bags, tr.bag_rewards):
            if bag.start >= s and bag.end <= e:
                bw.append(w)
                bs.append(bag.start - s)
                bl.append(bag.length)
                br.append(R)
    return BagBatch(states, actions, nexts, step_mask, state_mask,
                    np.array(bw, dtype=np.int64), np.array(bs, dtype=np.int64),
                    np.array(bl, dtype=np.int64), np.array(br, dtype=np.float64))


def sample_batch(trajs: Sequence[BagTrajectory], batch_size: int, seq_len: int, max_len: int,
                 rng: np.random.Generator, align: str = "bag") -> BagBatch:
    """Windows opened at bag starts drawn uniformly over all (trajectory, bag) pairs.

    With ``align="random"`` windows of ``seq_len`` steps start at a uniformly drawn
    step instead, so bag boundaries fall at varying window positions.
    """
    if align == "random":
        return make_window_batch(trajs, random_windows(trajs, batch_size, seq_len, rng))
    if align != "bag":
        raise ValueError(f"unknown window alignment {align!r}")
    counts = np.array([len(t.layout) for t in trajs])
    flat = rng.integers(0, counts.sum(), size=batch_size)
    owner = np.searchsorted(np.cumsum(counts), flat, side="right")
    local = flat - np.concatenate([[0], np.cumsum(counts)[:-1]])[owner]
    windows = [(int(i), *window_for(trajs[i], int(b), seq_len, max_len)) for i, b in zip(owner, local)]
    return make_window_batch(trajs, windows)


def random_windows(trajs: Sequence[BagTrajectory], batch_size: int, seq_len: int,
                   rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """(trajectory, start, end) windows with starts uniform over all stored steps."""
    lengths = np.array([len(t.states) for t in trajs])
    flat = rng.integers(0, lengths.sum(), size=batch_size)
    owner = np.searchsorted(np.cumsum(lengths), flat, side="right")
    start = flat - np.concatenate([[0], np.cumsum(lengths)[:-1]])[owner]
    return [(int(i), int(s), int(min(s + seq_len, lengths[i]))) for i, s in zip(owner, start)]
