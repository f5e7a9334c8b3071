"""Adapters that write a per-step reward channel into the replay buffer."""

from __future__ import annotations

import numpy as np

from .. import baselines
from ..baselines import RRDModel, RedistributorKind, default_rrd_k
from ..envlab import raw_stream
from ..rbt import RBTConfig, RBTTrainer, RewardBagTransformer, relabel_many
from .buffer import ReplayBuffer


class Redistributor:
    """Interface: ``update`` trains (if trainable), ``relabel`` rewrites the buffer channel."""

    trainable = False
    ready = True
    last_loss = float("nan")

    def update(self, buffer: ReplayBuffer, n_iters: int) -> float:
        return float("nan")

    def relabel(self, buffer: ReplayBuffer) -> None:
        raise NotImplementedError


class RawRedistributor(Redistributor):
    """R(B) at each bag's last step; each stored trajectory is labeled once."""

    def __init__(self):
        self._done: set[int] = set()

    def relabel(self, buffer: ReplayBuffer) -> None:
        for i, it in enumerate(buffer.items):
            if it.uid not in self._done:
                buffer.set_relabeled(i, raw_stream(it.traj.layout, it.traj.bag_rewards))
                self._done.add(it.uid)


class IRCRRedistributor(Redistributor):
    """Buffer-wide min-max normalized bag reward spread uniformly over the bag.

    The extrema are recomputed on every pass; when they have not moved only new
    trajectories are relabeled.
    """

    def __init__(self):
        self._extrema = None
        self._done: set[int] = set()

    def relabel(self, buffer: ReplayBuffer) -> None:
        if not len(buffer):
            return
        allR = np.concatenate(buffer.bag_rewards())
        extrema = (allR.min(), allR.max())
        redo = extrema != self._extrema
        self._extrema = extrema
        for i, it in enumerate(buffer.items):
            if redo or it.uid not in self._done:
                r = baselines.ircr_relabel([it.traj.layout], [it.traj.bag_rewards], extrema)[0]
                buffer.set_relabeled(i, r)
                self._done.add(it.uid)


class RRDRedistributor(Redistributor):
    trainable = True

    def __init__(self, state_dim: int, action_dim: int, K: int | None = None, seed: int = 0, **kw):
        self.K = K
        self.model = RRDModel(state_dim, action_dim, K=K or 32, seed=seed, **kw)
        self.ready = False

    def update(self, buffer: ReplayBuffer, n_iters: int) -> float:
        bags = []
        for it in buffer.items:
            tr = it.traj.transitions
            for b, R in zip(it.traj.layout.bags, it.traj.bag_rewards):
                bags.append((tr.observations[b.start:b.end], it.action_features[b.start:b.end], float(R)))
        if self.K is None:
            self.model.K = default_rrd_k(max(len(s) for s, _, _ in bags))
        losses = [self.model.step(bags) for _ in range(n_iters)]
        self.ready = True
        self.last_loss = float(np.mean(losses)) if losses else float("nan")
        return self.last_loss

    def relabel(self, buffer: ReplayBuffer) -> None:
        if not self.ready or not len(buffer):
            return
        S = np.concatenate([it.traj.transitions.observations for it in buffer.items])
        A = np.concatenate([it.action_features for it in buffer.items])
        r = self.model.predict(S, A)
        bounds = np.cumsum([len(it) for it in buffer.items])[:-1]
        buffer.set_all_relabeled(np.split(r, bounds))


class RBTRedistributor(Redistributor):
    trainable = True

    def __init__(self, state_dim: int, action_dim: int, config: RBTConfig | None = None, seed: int = 0):
        self.model = RewardBagTransformer(state_dim, action_dim, config, seed=seed)
        self.trainer = RBTTrainer(self.model, seed=seed + 1)
        self.ready = False

    def update(self, buffer: ReplayBuffer, n_iters: int) -> float:
        view = buffer.rbt_view()
        hist = self.trainer.fit(view, n_iters)
        self.ready = True
        vals = [h.reward_loss for h in hist if np.isfinite(h.reward_loss)]
        self.last_loss = float(np.mean(vals)) if vals else float("nan")
        return self.last_loss

    def relabel(self, buffer: ReplayBuffer) -> None:
        if not self.ready or not len(buffer):
            return
        seqs = [(it.traj.transitions.observations, it.action_features) for it in buffer.items]
        buffer.set_all_relabeled(relabel_many(self.model, seqs))


def make_redistributor(kind, state_dim: int, action_dim: int, rbt_config: RBTConfig | None = None,
                       rrd_k: int | None = None, seed: int = 0) -> Redistributor:
    kind = RedistributorKind.parse(kind) if isinstance(kind, str) else kind
    if kind is RedistributorKind.RAW:
        return RawRedistributor()
    if kind is RedistributorKind.IRCR:
        return IRCRRedistributor()
    if kind is RedistributorKind.RRD:
        return RRDRedistributor(state_dim, action_dim, rrd_k, seed=seed)
    return RBTRedistributor(state_dim, action_dim, rbt_config, seed=seed)
