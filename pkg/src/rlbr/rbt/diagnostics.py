"""Frozen buffers, gradient checks and bag-sum diagnostics for the reward model."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import envlab as el
from .. import numcore as nc
from ..numcore import Tape
from .batch import BagTrajectory, sample_batch
from .config import RBTConfig
from .model import RewardBagTransformer
from .train import bag_loss, relabel_many


def frozen_gridworld_buffer(n: int, bag_len: int, seed: int = 0, horizon: int = 200):
    """``n`` uniformly random gridworld episodes with fixed-length bags.

    Returns (trajectories as the reward model sees them, hidden per-step rewards).
    """
    env = el.gridworld_5x5(horizon)
    rng = np.random.default_rng(seed)
    trajs, hidden = [], []
    for _ in range(n):
        tr, r = el.rollout(env, lambda o, s, t: int(rng.integers(env.n_actions)), rng)
        lay = el.partition_fixed(len(tr), bag_len)
        trajs.append(BagTrajectory(tr.observations, env.action_features(tr.actions), tr.next_observations,
                                   tr.dones, lay, el.bag_rewards(r, lay)))
        hidden.append(r)
    return trajs, hidden


GRADCHECK_CONFIG = RBTConfig(n_causal_layers=1, n_heads=2, embed_dim=8, dropout=0.0, seq_len=10, relabel_len=10)


def model_gradcheck(seed: int, config: RBTConfig = GRADCHECK_CONFIG, h: float = 1e-5) -> float:
    """Max relative error between tape and central-difference gradients of the bag loss."""
    trajs, _ = frozen_gridworld_buffer(2, 5, seed=seed, horizon=30)
    model = RewardBagTransformer(trajs[0].states.shape[1], trajs[0].actions.shape[1], config, seed=seed)
    batch = sample_batch(trajs, 2, config.seq_len, config.positions, np.random.default_rng(seed))
    params = model.parameters()
    with Tape() as tape:
        total, _, _ = bag_loss(model, batch)
    grads = nc.backward(tape, total)
    analytic = [grads.get(p, np.zeros_like(p.data)) for p in params]
    numeric = nc.numerical_grad(lambda: bag_loss(model, batch)[0].item(), params, h)
    return nc.relative_error(analytic, numeric)


def bag_residuals(model: RewardBagTransformer, trajs: Sequence[BagTrajectory]) -> tuple[np.ndarray, np.ndarray]:
    """Per-bag |sum of relabeled rewards - R(B)| and |R(B)| over a buffer."""
    streams = relabel_many(model, [(t.states, t.actions) for t in trajs])
    resid, mags = [], []
    for r, t in zip(streams, trajs):
        sums = t.layout.indicator() @ r
        resid.append(np.abs(sums - t.bag_rewards))
        mags.append(np.abs(t.bag_rewards))
    return np.concatenate(resid), np.concatenate(mags)


def sum_consistency(model: RewardBagTransformer, trajs: Sequence[BagTrajectory]) -> float:
    """mean |sum r_hat - R(B)| / mean |R(B)|."""
    resid, mags = bag_residuals(model, trajs)
    return float(resid.mean() / mags.mean())


def pearson(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])
