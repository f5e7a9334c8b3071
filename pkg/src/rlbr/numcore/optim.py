"""AdamW with a linear warmup ramp and optional cosine decay, plus global-norm gradient clipping."""
from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError, Tensor


@dataclass
class OptimState:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    warmup_steps: int = 100
    decay_steps: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)


def effective_lr(state: OptimState) -> float:
    """Learning rate used by the step about to be taken (step counter before increment).

    Linear warmup, then constant, or cosine decay to zero at ``decay_steps`` when it is positive.
    """
    scale = 1.0 if state.warmup_steps <= 0 else min(state.step / state.warmup_steps, 1.0)
    if state.decay_steps > state.warmup_steps and state.step > state.warmup_steps:
        frac = min((state.step - state.warmup_steps) / (state.decay_steps - state.warmup_steps), 1.0)
        scale = 0.5 * (1.0 + math.cos(math.pi * frac))
    return state.lr * scale


def adamw_step(params: list[Tensor], grads: list[np.ndarray], state: OptimState) -> OptimState:
    """One decoupled-weight-decay Adam step, applied to ``params`` in place.

    Parameters with a ``None`` gradient are treated as having a zero gradient.
    """
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
    lr = effective_lr(state)
    t = state.step + 1
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape or state.first_moment[i].shape != p.shape:
            raise ShapeError(f"gradient/moment shape mismatch for parameter {i}: {g.shape} vs {p.shape}")
        m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g
        state.first_moment[i], state.second_moment[i] = m, v
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = p.data * (1.0 - lr * state.weight_decay) - lr * update
    state.step = t
    return state


def clip_grad_norm(grads: list, max_norm: float) -> tuple[list, float]:
    """Scale gradients so their joint l2 norm is at most ``max_norm``; returns (grads, pre-clip norm)."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads if g is not None)))
    if total > max_norm > 0:
        scale = max_norm / total
        grads = [None if g is None else g * scale for g in grads]
    return grads, total
