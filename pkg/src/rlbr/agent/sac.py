"""A small soft actor-critic for the continuous environments.

Gaussian policy squashed by tanh, twin critics with Polyak-averaged targets,
fixed entropy coefficient.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .. import numcore as nc
from ..numcore import MLP, OptimState, Tape, Tensor

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class SacConfig:
    hidden: int = 64
    lr: float = 3e-4
    gamma: float = 0.99
    alpha: float = 0.05
    polyak: float = 0.005  # weight on the online network in each target update
    batch_size: int = 64

    def __post_init__(self):
        if not 0.0 < self.polyak <= 1.0:
            raise ValueError("polyak must be in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")


class SacLite:
    discrete = False

    def __init__(self, obs_dim: int, action_dim: int, config: SacConfig | None = None, seed: int = 0):
        self.cfg = cfg = config or SacConfig()
        rng = np.random.default_rng(seed)
        self.action_dim = action_dim
        self.actor = MLP(rng, [obs_dim, cfg.hidden, cfg.hidden, 2 * action_dim], out_scale=0.01)
        self.q1 = MLP(rng, [obs_dim + action_dim, cfg.hidden, cfg.hidden, 1])
        self.q2 = MLP(rng, [obs_dim + action_dim, cfg.hidden, cfg.hidden, 1])
        self.q1_target = copy.deepcopy(self.q1)
        self.q2_target = copy.deepcopy(self.q2)
        self.actor_opt = OptimState(lr=cfg.lr, weight_decay=0.0, warmup_steps=0)
        self.critic_opt = OptimState(lr=cfg.lr, weight_decay=0.0, warmup_steps=0)

    # ------------------------------------------------------------------ policy

    def _dist(self, obs) -> tuple[Tensor, Tensor]:
        out = self.actor(nc.as_tensor(obs))
        A = self.action_dim
        mean = out[..., :A]
        log_std = nc.clip(out[..., A:], LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    def sample(self, obs, rng: np.random.Generator | None, deterministic: bool = False):
        """Reparameterized tanh-Gaussian sample; returns (action, log-prob) tensors."""
        mean, log_std = self._dist(obs)
        if deterministic or rng is None:
            noise = np.zeros(mean.shape)
        else:
            noise = rng.standard_normal(mean.shape)
        u = mean + nc.exp(log_std) * noise
        a = nc.tanh(u)
        gauss = (-0.5 * noise * noise - _HALF_LOG_2PI) - log_std
        squash = nc.log(1.0 - nc.square(a) + 1e-6)
        logp = (gauss - squash).sum(axis=-1)
        return a, logp

    def act(self, obs, sid: int, step: int, rng: np.random.Generator, explore: bool = True) -> np.ndarray:
        a, _ = self.sample(np.asarray(obs)[None], rng, deterministic=not explore)
        return a.data[0]

    # ------------------------------------------------------------------ losses

    @staticmethod
    def _q(net: MLP, obs, act) -> Tensor:
        x = nc.concat([nc.as_tensor(obs), nc.as_tensor(act)], axis=-1)
        out = net(x)
        return out.reshape(*out.shape[:-1])

    def critic_targets(self, batch, rng: np.random.Generator | None, deterministic: bool = False) -> np.ndarray:
        """y = r + gamma * (1 - done) * (min target Q(s', a') - alpha * log pi(a'|s'))."""
        a2, logp2 = self.sample(batch.next_observations, rng, deterministic)
        tq = np.minimum(self._q(self.q1_target, batch.next_observations, a2.data).data,
                        self._q(self.q2_target, batch.next_observations, a2.data).data)
        soft = tq - self.cfg.alpha * logp2.data if self.cfg.alpha > 0 else tq
        return batch.rewards + self.cfg.gamma * ~np.asarray(batch.dones, dtype=bool) * soft

    def critic_loss(self, batch, y: np.ndarray) -> Tensor:
        q1 = self._q(self.q1, batch.observations, batch.actions)
        q2 = self._q(self.q2, batch.observations, batch.actions)
        return nc.square(q1 - y).mean() + nc.square(q2 - y).mean()

    def actor_loss(self, batch, rng: np.random.Generator | None) -> Tensor:
        a, logp = self.sample(batch.observations, rng)
        q = nc.minimum(self._q(self.q1, batch.observations, a), self._q(self.q2, batch.observations, a))
        return (logp * self.cfg.alpha - q).mean()

    # ------------------------------------------------------------------ update

    def _apply(self, params, loss: Tensor, tape: Tape, opt: OptimState) -> None:
        grads = nc.backward(tape, loss)
        glist = [grads.get(p) for p in params]
        if not all(g is None or np.isfinite(g).all() for g in glist):
            raise FloatingPointError("non-finite gradient in SAC update")
        nc.adamw_step(params, glist, opt)

    def update(self, batch, rng: np.random.Generator) -> dict:
        y = self.critic_targets(batch, rng)
        critic_params = self.q1.parameters() + self.q2.parameters()
        with Tape() as tape:
            lc = self.critic_loss(batch, y)
        self._apply(critic_params, lc, tape, self.critic_opt)
        with Tape() as tape:
            la = self.actor_loss(batch, rng)
        self._apply(self.actor.parameters(), la, tape, self.actor_opt)
        self.q1_target.copy_from(self.q1, self.cfg.polyak)
        self.q2_target.copy_from(self.q2, self.cfg.polyak)
        if not (np.isfinite(lc.item()) and np.isfinite(la.item())):
            raise FloatingPointError("non-finite SAC loss")
        return {"critic_loss": lc.item(), "actor_loss": la.item()}
