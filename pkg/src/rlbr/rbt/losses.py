"""Bag reward loss, next-state loss and their weighted sum."""

from __future__ import annotations

import numpy as np

from .. import numcore as nc
from ..numcore import Tensor


def reward_loss(rewards: Tensor, bag_matrix: np.ndarray, bag_rewards: np.ndarray) -> Tensor:
    """Mean over bags of (sum of predicted rewards in the bag - R(B))^2.

    ``rewards`` may have any shape; ``bag_matrix`` indexes its flattened form.
    """
    if len(bag_rewards) == 0:
        raise ValueError("reward loss needs at least one bag")
    sums = nc.as_tensor(bag_matrix) @ rewards.reshape(-1, 1)
    resid = sums.reshape(-1) - bag_rewards
    return nc.square(resid).mean()


def state_loss(pred: Tensor, target: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean over (unmasked) steps of the squared l2 distance to the true next state."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    sq = nc.square(pred - target).sum(axis=-1)
    if mask is None:
        return sq.mean()
    mask = np.asarray(mask, dtype=np.float64)
    n = mask.sum()
    if n == 0:
        return sq.sum() * 0.0
    return (sq * mask).sum() * (1.0 / n)


def composite_loss(l_r: Tensor, l_s: Tensor, beta: float) -> Tensor:
    if beta <= 0:
        raise ValueError("beta must be > 0")
    return l_r + l_s * beta
