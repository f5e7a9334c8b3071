"""Optimization of the reward model and relabeling of stored trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import numcore as nc
from ..numcore import OptimState, Tape
from .batch import BagBatch, BagTrajectory, sample_batch
from .losses import composite_loss, reward_loss, state_loss
from .model import RewardBagTransformer


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class StepResult:
    loss: float
    reward_loss: float
    state_loss: float
    grad_norm: float
    clipped: bool


def make_optimizer(model: RewardBagTransformer) -> OptimState:
    cfg = model.config
    decay = cfg.total_steps if cfg.lr_schedule == "cosine" else 0
    return OptimState(lr=cfg.lr, weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps, decay_steps=decay)


def bag_loss(model: RewardBagTransformer, batch: BagBatch, rng=None, training: bool = False):
    """(L_bag, L_r or None, L_s or None) for one batch, recorded on the active tape."""
    r, s_next, _ = model.forward(batch.states, batch.actions, batch.step_mask, rng, training)
    l_r = reward_loss(r, batch.bag_matrix(), batch.bag_rewards) if batch.n_bags else None
    l_s = state_loss(s_next, batch.next_states, batch.state_mask) if s_next is not None else None
    if l_r is not None and l_s is not None:
        total = composite_loss(l_r, l_s, model.config.beta)
    elif l_r is not None:
        total = l_r
    elif l_s is not None:
        total = l_s * model.config.beta
    else:
        total = None
    return total, l_r, l_s


def train_step(model: RewardBagTransformer, batch: BagBatch, optim: OptimState,
               rng: np.random.Generator | None = None) -> StepResult:
    """One clipped AdamW step on the bag loss. Dropout is active when ``rng`` is given."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    params = model.parameters()
    try:
        with Tape() as tape:
            total, l_r, l_s = bag_loss(model, batch, rng, training=rng is not None)
    except nc.NonFiniteError as exc:
        raise TrainingDivergedError(f"non-finite value in forward pass at optimizer step {optim.step}: {exc}") from exc
    if total is None:
        return StepResult(float("nan"), float("nan"), float("nan"), 0.0, False)
    grads = nc.backward(tape, total)
    glist = [grads.get(p) for p in params]
    if not all(g is None or np.isfinite(g).all() for g in glist):
        raise TrainingDivergedError(f"non-finite gradient at optimizer step {optim.step}, loss {total.item()}")
    glist, norm = nc.clip_grad_norm(glist, model.config.grad_clip)
    nc.adamw_step(params, glist, optim)
    return StepResult(
        loss=total.item(),
        reward_loss=l_r.item() if l_r is not None else float("nan"),
        state_loss=l_s.item() if l_s is not None else float("nan"),
        grad_norm=norm,
        clipped=norm > model.config.grad_clip,
    )


class RBTTrainer:
    """Model + optimizer + rng, sampling windows from a list of stored trajectories."""

    def __init__(self, model: RewardBagTransformer, seed: int = 0):
        self.model = model
        self.optim = make_optimizer(model)
        self.rng = np.random.default_rng(seed)
        self.history: list[StepResult] = []

    def sample(self, trajs: Sequence[BagTrajectory]) -> BagBatch:
        cfg = self.model.config
        return sample_batch(trajs, cfg.batch_size, cfg.seq_len, cfg.positions, self.rng, cfg.window_align)

    def step(self, trajs: Sequence[BagTrajectory]) -> StepResult:
        res = train_step(self.model, self.sample(trajs), self.optim, self.rng)
        self.history.append(res)
        return res

    def fit(self, trajs: Sequence[BagTrajectory], n_steps: int) -> list[StepResult]:
        return [self.step(trajs) for _ in range(n_steps)]


def _attention_budget(model: RewardBagTransformer, n_tokens: int) -> int:
    """How many sequences of ``n_tokens`` fit in one inference batch."""
    per_seq = model.config.n_heads * n_tokens * n_tokens
    return max(1, int(4_000_000 // per_seq))


def relabel(model: RewardBagTransformer, states: np.ndarray, actions: np.ndarray,
            chunk_len: int | None = None) -> np.ndarray:
    """Per-step predicted rewards, processing consecutive chunks of ``relabel_len`` without dropout."""
    return relabel_many(model, [(states, actions)], chunk_len)[0]


def relabel_many(model: RewardBagTransformer, seqs: Sequence[tuple[np.ndarray, np.ndarray]],
                 chunk_len: int | None = None) -> list[np.ndarray]:
    chunk_len = chunk_len or model.config.relabel_len
    chunks = []  # (seq index, start, end)
    for i, (s, _) in enumerate(seqs):
        for c in range(0, len(s), chunk_len):
            chunks.append((i, c, min(c + chunk_len, len(s))))
    out = [np.zeros(len(s)) for s, _ in seqs]
    order = sorted(range(len(chunks)), key=lambda j: chunks[j][2] - chunks[j][1])
    k = 0
    while k < len(order):
        L = chunks[order[k]][2] - chunks[order[k]][1]
        group = [order[k]]
        # grow the group while the padded width stays at the group's longest chunk
        while k + len(group) < len(order) and len(group) < _attention_budget(model, 2 * L):
            nxt = order[k + len(group)]
            L = max(L, chunks[nxt][2] - chunks[nxt][1])
            group.append(nxt)
        ds = seqs[0][0].shape[1]
        da = seqs[0][1].shape[1]
        S = np.zeros((len(group), L, ds))
        A = np.zeros((len(group), L, da))
        mask = np.zeros((len(group), L), dtype=bool)
        for g, j in enumerate(group):
            i, a, b = chunks[j]
            S[g, :b - a] = seqs[i][0][a:b]
            A[g, :b - a] = seqs[i][1][a:b]
            mask[g, :b - a] = True
        r, _, _ = model.forward(S, A, mask, training=False)
        for g, j in enumerate(group):
            i, a, b = chunks[j]
            out[i][a:b] = r.data[g, :b - a]
        k += len(group)
    return out
