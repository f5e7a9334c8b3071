"""Alternating loop: collect, store with bags, update the reward model, relabel, optimize the policy."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .. import envlab as el
from ..baselines import bag_sum_residual
from .buffer import ReplayBuffer
from .redistributors import Redistributor

LOG_COLUMNS = ("step", "eval_return_mean", "eval_return_std", "rbt_loss", "reward_residual")


@dataclass
class LoopConfig:
    total_steps: int = 100_000
    eval_interval: int = 5_000
    eval_episodes: int = 5
    pretrain_steps: int = 10_000  # reward-model training starts once this many steps are stored
    pretrain_iters: int = 100
    iters_per_traj: int = 10
    round_every: int = 1  # trajectories per reward-model update round
    round_min_steps: int = 0  # and at least this many new steps
    max_iters_per_round: int | None = None
    learning_starts: int | None = None  # defaults to pretrain_steps
    updates_per_step: float = 1.0
    batch_size: int = 64
    buffer_capacity: int = 1_000_000

    def __post_init__(self):
        for name in ("total_steps", "eval_interval", "eval_episodes", "round_every", "batch_size",
                     "buffer_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("pretrain_steps", "pretrain_iters", "iters_per_traj"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.updates_per_step < 0:
            raise ValueError("updates_per_step must be >= 0")

    @property
    def start_learning(self) -> int:
        return self.pretrain_steps if self.learning_starts is None else self.learning_starts


@dataclass
class LogRow:
    step: int
    eval_return_mean: float
    eval_return_std: float
    rbt_loss: float
    reward_residual: float


@dataclass
class TrainingLog:
    rows: list[LogRow] = field(default_factory=list)
    rbt_rounds: list[tuple[int, int]] = field(default_factory=list)  # (step, iterations)

    @property
    def final_return(self) -> float:
        return self.rows[-1].eval_return_mean if self.rows else float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow([r.step] + [_fmt(getattr(r, c)) for c in LOG_COLUMNS[1:]])


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "step" else float(v)) for k, v in r.items()} for r in rows]


def evaluate(learner, env, n_episodes: int, rng: np.random.Generator) -> tuple[float, float]:
    """Mean and std of undiscounted hidden-reward returns under the greedy/mean-action policy."""
    returns = []
    for _ in range(n_episodes):
        _, r = el.rollout(env, lambda o, s, t: learner.act(o, s, 0, rng, explore=False), rng)
        returns.append(float(r.sum()))
    return float(np.mean(returns)), float(np.std(returns))


def check_compatible(env, learner) -> None:
    if bool(env.discrete) != bool(learner.discrete):
        kind = "discrete" if env.discrete else "continuous"
        raise TypeError(f"learner {type(learner).__name__} cannot act in a {kind} environment")


def rlbr_loop(env, redistributor: Redistributor, learner, config: LoopConfig, regime: dict,
              seed: int = 0, eval_env=None) -> TrainingLog:
    check_compatible(env, learner)
    streams = np.random.SeedSequence(seed).spawn(5)
    env_rng, act_rng, layout_rng, update_rng, eval_rng = (np.random.default_rng(s) for s in streams)
    eval_env = eval_env or env
    buffer = ReplayBuffer(config.buffer_capacity)
    log = TrainingLog()
    step = 0
    next_eval = config.eval_interval
    pending = 0  # trajectories stored since the last reward-model round
    pending_steps = 0
    rbt_loss = float("nan")

    def log_eval(at: int) -> None:
        mean, std = evaluate(learner, eval_env, config.eval_episodes, eval_rng)
        resid = (bag_sum_residual(buffer.relabeled(), buffer.layouts(), buffer.bag_rewards())
                 if redistributor.ready and len(buffer) else float("nan"))
        log.rows.append(LogRow(at, mean, std, rbt_loss, resid))

    while step < config.total_steps:
        t0 = step
        horizon = min(env.horizon, config.total_steps - step)
        tr, hidden = el.rollout(env, lambda o, s, t: learner.act(o, s, t0 + t, act_rng), env_rng, horizon)
        layout = el.layout_for(regime, len(tr), layout_rng)
        buffer.add(el.BaggedTrajectory.build(tr, hidden, layout), env.action_features(tr.actions))
        step += len(tr)
        pending += 1
        pending_steps += len(tr)

        if redistributor.trainable:
            n_iters = 0
            if not redistributor.ready:
                if buffer.n_steps >= config.pretrain_steps:
                    n_iters = config.pretrain_iters
            elif pending >= config.round_every and pending_steps >= config.round_min_steps:
                n_iters = config.iters_per_traj * pending
            if n_iters and config.max_iters_per_round is not None:
                n_iters = min(n_iters, config.max_iters_per_round)
            if n_iters or (not redistributor.ready and buffer.n_steps >= config.pretrain_steps):
                rbt_loss = redistributor.update(buffer, n_iters)
                log.rbt_rounds.append((step, n_iters))
                pending = pending_steps = 0
                redistributor.relabel(buffer)
        else:
            redistributor.relabel(buffer)

        if redistributor.ready and step >= config.start_learning:
            n_updates = int(round(len(tr) * config.updates_per_step))
            if hasattr(learner, "start"):
                learner.start(step)
            for _ in range(n_updates):
                learner.update(buffer.sample(config.batch_size, update_rng), update_rng)

        while step >= next_eval:
            log_eval(next_eval)
            next_eval += config.eval_interval
    if not log.rows or log.rows[-1].step != step:
        log_eval(step)
    return log



