"""Trajectory replay buffer with immutable bag annotations and a relabeled reward channel."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..envlab import BaggedTrajectory
from ..rbt import BagTrajectory


@dataclass
class StoredTrajectory:
    uid: int
    traj: BaggedTrajectory
    action_features: np.ndarray
    relabeled: np.ndarray

    def __len__(self) -> int:
        return len(self.traj)


@dataclass
class TransitionBatch:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    dones: np.ndarray
    state_ids: np.ndarray | None = None
    next_state_ids: np.ndarray | None = None


class _Flat:
    """Growable column store of every stored step, so sampling never re-concatenates."""

    def __init__(self):
        self.cols: dict[str, np.ndarray] = {}
        self.n = 0

    def append(self, **cols) -> int:
        k = len(next(iter(cols.values())))
        start = self.n
        for name, v in cols.items():
            v = np.asarray(v)
            arr = self.cols.get(name)
            if arr is None:
                arr = np.zeros((max(1024, 2 * k),) + v.shape[1:], dtype=v.dtype)
            elif start + k > len(arr):
                grown = np.zeros((max(2 * len(arr), start + k),) + arr.shape[1:], dtype=arr.dtype)
                grown[:start] = arr[:start]
                arr = grown
            arr[start:start + k] = v
            self.cols[name] = arr
        self.n += k
        return start

    def __getitem__(self, name: str) -> np.ndarray:
        return self.cols[name][:self.n]


class ReplayBuffer:
    """Whole trajectories, evicted oldest-first once the stored step count exceeds ``capacity``."""

    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.items: deque[StoredTrajectory] = deque()
        self.offsets: deque[int] = deque()
        self.inserted = 0
        self.n_steps = 0
        self._flat = _Flat()

    def __len__(self) -> int:
        return len(self.items)

    def _push_flat(self, item: StoredTrajectory) -> int:
        tr = item.traj.transitions
        cols = dict(observations=tr.observations, actions=tr.actions, next_observations=tr.next_observations,
                    dones=tr.dones, rewards=item.relabeled)
        if tr.state_ids is not None:
            cols.update(state_ids=tr.state_ids, next_state_ids=tr.next_state_ids)
        return self._flat.append(**cols)

    def add(self, traj: BaggedTrajectory, action_features: np.ndarray) -> int:
        """Store a trajectory; its relabeled channel starts at zero."""
        traj.bag_rewards.setflags(write=False)
        item = StoredTrajectory(self.inserted, traj, np.asarray(action_features, dtype=np.float64),
                                np.zeros(len(traj)))
        self.items.append(item)
        self.offsets.append(self._push_flat(item))
        self.inserted += 1
        self.n_steps += len(traj)
        evicted = False
        while self.n_steps > self.capacity and len(self.items) > 1:
            old = self.items.popleft()
            self.offsets.popleft()
            self.n_steps -= len(old)
            evicted = True
        if evicted:
            self._flat = _Flat()
            self.offsets = deque(self._push_flat(it) for it in self.items)
        return item.uid

    def set_relabeled(self, index: int, rewards: np.ndarray) -> None:
        item = self.items[index]
        rewards = np.asarray(rewards, dtype=np.float64)
        if rewards.shape != (len(item),):
            raise ValueError(f"relabeled channel must have shape ({len(item)},), got {rewards.shape}")
        item.relabeled = rewards.copy()
        off = self.offsets[index]
        self._flat.cols["rewards"][off:off + len(item)] = rewards

    def set_all_relabeled(self, streams) -> None:
        streams = list(streams)
        if len(streams) != len(self.items):
            raise ValueError("one stream per stored trajectory expected")
        for i, r in enumerate(streams):
            self.set_relabeled(i, r)

    def rbt_view(self) -> list[BagTrajectory]:
        return [BagTrajectory(it.traj.transitions.observations, it.action_features,
                              it.traj.transitions.next_observations, it.traj.transitions.dones,
                              it.traj.layout, it.traj.bag_rewards) for it in self.items]

    def layouts(self):
        return [it.traj.layout for it in self.items]

    def bag_rewards(self):
        return [it.traj.bag_rewards for it in self.items]

    def relabeled(self) -> list[np.ndarray]:
        return [it.relabeled for it in self.items]

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Uniform transitions over all stored steps, rewards from the relabeled channel."""
        if self.n_steps == 0:
            raise ValueError("cannot sample from an empty buffer")
        f = self._flat
        idx = rng.integers(0, self.n_steps, size=batch_size)
        has_ids = "state_ids" in f.cols
        return TransitionBatch(
            f["observations"][idx], f["actions"][idx], f["rewards"][idx], f["next_observations"][idx],
            f["dones"][idx],
            f["state_ids"][idx] if has_ids else None,
            f["next_state_ids"][idx] if has_ids else None,
        )
