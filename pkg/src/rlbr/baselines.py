"""Reward streams the reward bag transformer is compared against.

Each redistributor turns stored bag annotations into a per-step reward channel:

* ``raw``: the bag reward at the bag's final step, zero elsewhere;
* ``ircr``: every step of a bag gets its min-max normalized bag reward;
* ``rrd``: a per-step reward network trained so that scaled random subset
  sums match the bag reward.
"""

from __future__ import annotations

import enum
import itertools
from typing import Sequence

import numpy as np

from . import numcore as nc
from .envlab import BagLayout, raw_stream
from .numcore import MLP, OptimState, Tape, Tensor

__all__ = ["RedistributorKind", "raw_stream", "ircr_relabel", "rrd_loss", "rrd_subset_estimates",
           "RRDModel", "default_rrd_k", "bag_sum_residual"]


class RedistributorKind(str, enum.Enum):
    RAW = "raw"
    IRCR = "ircr"
    RRD = "rrd"
    RBT = "rbt"

    @classmethod
    def parse(cls, name: str) -> RedistributorKind:
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown redistributor {name!r}; expected one of {[k.value for k in cls]}") from None


def ircr_relabel(layouts: Sequence[BagLayout], bag_rewards: Sequence[np.ndarray],
                 extrema: tuple[float, float] | None = None) -> list[np.ndarray]:
    """Uniform redistribution with buffer-wide min-max normalization.

    A step covered by several bags gets the mean of their normalized values; a
    step covered by none gets 0. ``extrema`` overrides the (min, max) taken
    over ``bag_rewards``, for relabeling a subset of a larger buffer.
    """
    if not layouts or sum(len(lay) for lay in layouts) == 0:
        raise ValueError("IRCR needs at least one bag")
    if extrema is None:
        allR = np.concatenate([np.asarray(r, dtype=np.float64) for r in bag_rewards])
        extrema = (allR.min(), allR.max())
    lo, hi = extrema
    out = []
    for lay, R in zip(layouts, bag_rewards):
        norm = np.full(len(R), 0.5) if hi == lo else (np.asarray(R) - lo) / (hi - lo)
        ind = lay.indicator()  # [n_bags, T]
        cover = ind.sum(0)
        total = norm @ ind
        out.append(np.divide(total, cover, out=np.zeros(lay.horizon), where=cover > 0))
    return out


def rrd_loss(r_hat: Tensor, bag_reward: float, subset: np.ndarray, n: int) -> Tensor:
    """(R(B) - n/K * sum of r_hat over the subset)^2 for one bag of length ``n``.

    ``r_hat`` holds the bag's predicted rewards; ``subset`` indexes into it.
    """
    subset = np.asarray(subset, dtype=np.int64)
    K = len(subset)
    if K < 1 or K > n:
        raise ValueError(f"subset size {K} must be in [1, {n}]")
    if len(np.unique(subset)) != K or subset.min() < 0 or subset.max() >= n:
        raise ValueError("subset indices must be distinct and inside the bag")
    est = r_hat[subset].sum() * (n / K)
    return nc.square(est - bag_reward)


def rrd_subset_estimates(r_hat: np.ndarray, K: int) -> np.ndarray:
    """Scaled sums n/K * sum(r_hat[S]) over every size-K subset S (for checking unbiasedness)."""
    n = len(r_hat)
    return np.array([r_hat[list(S)].sum() * n / K for S in itertools.combinations(range(n), K)])


class RRDModel:
    """Per-step reward perceptron on (s, a) features, trained with the subset loss."""

    def __init__(self, state_dim: int, action_dim: int, hidden: int = 64, K: int = 32, lr: float = 1e-3,
                 batch_bags: int = 32, seed: int = 0):
        if K < 1:
            raise ValueError("K must be >= 1")
        rng = np.random.default_rng(seed)
        self.net = MLP(rng, [state_dim + action_dim, hidden, hidden, 1], out_scale=0.02)
        self.optim = OptimState(lr=lr, weight_decay=0.0, warmup_steps=0)
        self.K = K
        self.batch_bags = batch_bags
        self.rng = np.random.default_rng(seed + 1)

    def predict(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        x = np.concatenate([states, actions], axis=-1)
        return self.net(Tensor(x)).data[..., 0]

    def step(self, bags: Sequence[tuple[np.ndarray, np.ndarray, float]]) -> float:
        """One optimizer step on a random batch of (states, actions, R) bags; returns the mean loss."""
        pick = self.rng.integers(0, len(bags), size=min(self.batch_bags, len(bags)))
        rows, seg, target, scale = [], [], [], []
        for j, b in enumerate(pick):
            s, a, R = bags[b]
            n = len(s)
            k = min(self.K, n)
            sub = self.rng.choice(n, size=k, replace=False)
            rows.append(np.concatenate([s[sub], a[sub]], axis=-1))
            seg.extend([j] * k)
            target.append(R)
            scale.append(n / k)
        X = np.concatenate(rows)
        G = np.zeros((len(pick), len(X)))
        G[np.array(seg), np.arange(len(X))] = np.repeat(scale, [len(r) for r in rows])
        params = self.net.parameters()
        with Tape() as tape:
            r = self.net(Tensor(X))
            est = Tensor(G) @ r
            loss = nc.square(est.reshape(-1) - np.array(target)).mean()
        grads = nc.backward(tape, loss)
        glist, _ = nc.clip_grad_norm([grads.get(p) for p in params], 1.0)
        nc.adamw_step(params, glist, self.optim)
        return loss.item()


def default_rrd_k(n: int) -> int:
    return max(1, min(32, n))


def bag_sum_residual(streams: Sequence[np.ndarray], layouts: Sequence[BagLayout],
                     bag_rewards: Sequence[np.ndarray]) -> float:
    """Mean over bags of |sum of the stream over the bag - R(B)|, relative to mean |R(B)|."""
    resid, mags = [], []
    for r, lay, R in zip(streams, layouts, bag_rewards):
        sums = lay.indicator() @ r
        resid.append(np.abs(sums - R))
        mags.append(np.abs(R))
    resid, mags = np.concatenate(resid), np.concatenate(mags)
    denom = mags.mean()
    return float(resid.mean() / denom) if denom > 0 else float(resid.mean())

