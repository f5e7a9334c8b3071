"""Desk-scale environments with hidden per-step rewards, bag partitioners and the bagged view.

Hidden rewards are the environment's latent per-step signal. They are used to
build bagged rewards and to score policies, and are otherwise sealed: reading
them from a :class:`BaggedTrajectory` requires an explicit
:func:`hidden_access` block.
"""

from __future__ import annotations

import contextlib
import json
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class HiddenRewardAccessError(PermissionError):
    pass


_hidden = threading.local()


@contextlib.contextmanager
def hidden_access():
    """Unseal hidden reward channels inside the block (tests, diagnostics, evaluation only)."""
    _hidden.depth = getattr(_hidden, "depth", 0) + 1
    try:
        yield
    finally:
        _hidden.depth -= 1


def hidden_allowed() -> bool:
    return getattr(_hidden, "depth", 0) > 0


# --------------------------------------------------------------------------- bags


@dataclass(frozen=True)
class BagSpec:
    start: int
    length: int

    def __post_init__(self):
        if self.length < 1 or self.start < 0:
            raise ValueError(f"invalid bag start={self.start} length={self.length}")

    @property
    def end(self) -> int:
        return self.start + self.length

    @property
    def last(self) -> int:
        return self.start + self.length - 1


@dataclass(frozen=True)
class BagLayout:
    horizon: int
    bags: tuple[BagSpec, ...]

    def __post_init__(self):
        if not self.bags:
            raise ValueError("a layout needs at least one bag")
        for b in self.bags:
            if b.end > self.horizon:
                raise ValueError(f"bag {b} exceeds horizon {self.horizon}")

    def __len__(self) -> int:
        return len(self.bags)

    def __iter__(self):
        return iter(self.bags)

    @property
    def neighboring(self) -> bool:
        """True when the bags tile [0, horizon) in order."""
        pos = 0
        for b in self.bags:
            if b.start != pos:
                return False
            pos = b.end
        return pos == self.horizon

    def coverage(self) -> np.ndarray:
        """Number of bags covering each step."""
        c = np.zeros(self.horizon, dtype=np.int64)
        for b in self.bags:
            c[b.start:b.end] += 1
        return c

    def bag_ids(self) -> list[list[int]]:
        ids: list[list[int]] = [[] for _ in range(self.horizon)]
        for k, b in enumerate(self.bags):
            for t in range(b.start, b.end):
                ids[t].append(k)
        return ids

    def indicator(self) -> np.ndarray:
        """[n_bags, horizon] 0/1 membership matrix."""
        g = np.zeros((len(self.bags), self.horizon))
        for k, b in enumerate(self.bags):
            g[k, b.start:b.end] = 1.0
        return g

    def to_list(self) -> list[list[int]]:
        return [[b.start, b.length] for b in self.bags]

    @classmethod
    def from_list(cls, horizon: int, pairs) -> BagLayout:
        return cls(horizon, tuple(BagSpec(int(s), int(n)) for s, n in pairs))


def partition_fixed(T: int, bag_len: int) -> BagLayout:
    """Neighboring bags of ``bag_len`` steps; the last bag is truncated at T."""
    if bag_len < 1:
        raise ValueError("bag_len must be >= 1")
    if T < 1:
        raise ValueError("trajectory length must be >= 1")
    return BagLayout(T, tuple(BagSpec(s, min(bag_len, T - s)) for s in range(0, T, bag_len)))


def partition_trajectory(T: int) -> BagLayout:
    return partition_fixed(T, T)


def partition_arbitrary(T: int, len_range: Sequence[int], interval_range: Sequence[int],
                        rng: np.random.Generator) -> BagLayout:
    """Bags of random length separated by random gaps; a negative gap overlaps the previous bag.

    Lengths are drawn uniformly from ``len_range`` and gaps from
    ``interval_range`` (both inclusive). A bag that would run past T is
    truncated, so every layout holds at least one in-bounds bag.
    """
    lo, hi = int(len_range[0]), int(len_range[1])
    glo, ghi = int(interval_range[0]), int(interval_range[1])
    if T < 1:
        raise ValueError("trajectory length must be >= 1")
    if lo < 1 or hi < lo:
        raise ValueError(f"empty length range {len_range}")
    if ghi < glo:
        raise ValueError(f"empty interval range {interval_range}")
    bags = []
    start = 0
    while start < T:
        n = min(int(rng.integers(lo, hi + 1)), T - start)
        bags.append(BagSpec(start, n))
        gap = int(rng.integers(glo, ghi + 1))
        # always advance so the loop terminates even with large overlaps
        start = max(start + n + gap, start + 1, 0)
    return BagLayout(T, tuple(bags))


def bag_rewards(hidden_rewards, layout: BagLayout) -> np.ndarray:
    """R(B) for every bag: the sum of hidden rewards over the bag's interval."""
    r = np.asarray(hidden_rewards, dtype=np.float64)
    if len(r) != layout.horizon:
        raise ValueError(f"reward stream length {len(r)} != layout horizon {layout.horizon}")
    return np.array([r[b.start:b.end].sum() for b in layout.bags])


def raw_stream(layout: BagLayout, rewards) -> np.ndarray:
    """R(B) placed at each bag's last step, zero elsewhere; overlapping bag ends add up."""
    out = np.zeros(layout.horizon)
    for b, rb in zip(layout.bags, rewards):
        out[b.last] += rb
    return out


# --------------------------------------------------------------------------- trajectories


@dataclass
class Transitions:
    """Learner-visible part of a rollout: no rewards."""

    observations: np.ndarray
    actions: np.ndarray
    next_observations: np.ndarray
    dones: np.ndarray
    state_ids: np.ndarray | None = None
    next_state_ids: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.observations)


@dataclass
class BaggedTrajectory:
    transitions: Transitions
    layout: BagLayout
    bag_rewards: np.ndarray
    _hidden: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, transitions: Transitions, hidden_rewards, layout: BagLayout) -> BaggedTrajectory:
        hidden = np.asarray(hidden_rewards, dtype=np.float64).copy()
        hidden.setflags(write=False)
        return cls(transitions, layout, bag_rewards(hidden, layout), hidden)

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def hidden_rewards(self) -> np.ndarray:
        if not hidden_allowed():
            raise HiddenRewardAccessError("hidden rewards are sealed; use envlab.hidden_access()")
        return self._hidden


def learner_view(traj: BaggedTrajectory, mode: str = "raw") -> np.ndarray:
    """Per-step reward stream as a learner would see it.

    ``raw`` puts R(B) at each bag's final index and zero elsewhere;
    ``hidden`` returns the latent per-step rewards and needs hidden access.
    """
    if mode == "raw":
        return raw_stream(traj.layout, traj.bag_rewards)
    if mode == "hidden":
        return traj.hidden_rewards.copy()
    raise ValueError(f"unknown view mode {mode!r}")


def write_records(traj: BaggedTrajectory, fh, mode: str = "raw") -> None:
    """Line-oriented JSON: one layout header line, then one record per step."""
    stream = learner_view(traj, mode)
    tr = traj.transitions
    header = {"horizon": traj.layout.horizon, "layout": traj.layout.to_list(),
              "bag_rewards": [float(x) for x in traj.bag_rewards]}
    fh.write(json.dumps(header) + "\n")
    ids = traj.layout.bag_ids()
    for t in range(len(tr)):
        state = tr.state_ids[t].item() if tr.state_ids is not None else tr.observations[t].tolist()
        action = np.asarray(tr.actions[t]).tolist()
        rec = {"t": t, "state": state, "action": action, "bag": ids[t], "reward": float(stream[t])}
        fh.write(json.dumps(rec) + "\n")


def read_records(lines: Iterable[str]) -> tuple[BagLayout, np.ndarray, list[dict]]:
    it = iter(lines)
    header = json.loads(next(it))
    layout = BagLayout.from_list(header["horizon"], header["layout"])
    records = [json.loads(line) for line in it if line.strip()]
    return layout, np.array(header["bag_rewards"]), records


# --------------------------------------------------------------------------- environments


@dataclass
class TabularMDP:
    transition: np.ndarray  # [S, A, S]
    hidden_reward: np.ndarray  # [S, A]
    horizon: int
    initial_dist: np.ndarray
    terminal_states: tuple = ()

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.hidden_reward = np.asarray(self.hidden_reward, dtype=np.float64)
        self.initial_dist = np.asarray(self.initial_dist, dtype=np.float64)
        self.validate()

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def validate(self) -> None:
        S, A = self.hidden_reward.shape
        if self.transition.shape != (S, A, S):
            raise ValueError(f"transition shape {self.transition.shape} != {(S, A, S)}")
        if np.any(self.transition < 0) or np.abs(self.transition.sum(-1) - 1.0).max() > 1e-12:
            raise ValueError("transition rows must be probability vectors")
        if self.initial_dist.shape != (S,) or abs(self.initial_dist.sum() - 1.0) > 1e-12:
            raise ValueError("initial distribution must sum to 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def deterministic(self) -> bool:
        return bool(np.all((self.transition == 0) | (self.transition == 1))
                    and np.count_nonzero(self.initial_dist) == 1)

    def with_horizon(self, horizon: int) -> TabularMDP:
        return TabularMDP(self.transition, self.hidden_reward, horizon, self.initial_dist, self.terminal_states)


class TabularEnv:
    """Samples a :class:`TabularMDP`; observations are one-hot state vectors."""

    discrete = True

    def __init__(self, mdp: TabularMDP):
        self.mdp = mdp
        self.horizon = mdp.horizon
        self.n_states = mdp.n_states
        self.n_actions = mdp.n_actions
        self.obs_dim = mdp.n_states
        self.action_dim = mdp.n_actions
        self._eye = np.eye(mdp.n_states)
        self.state = 0
        self._rng: np.random.Generator | None = None

    def observe(self, s: int) -> np.ndarray:
        return self._eye[s]

    def action_features(self, actions) -> np.ndarray:
        return np.eye(self.n_actions)[np.asarray(actions, dtype=np.int64)]

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        self.state = int(rng.choice(self.n_states, p=self.mdp.initial_dist))
        return self.observe(self.state)

    def step(self, action: int):
        s = self.state
        reward = float(self.mdp.hidden_reward[s, action])
        row = self.mdp.transition[s, action]
        nxt = int(np.argmax(row)) if row.max() == 1.0 else int(self._rng.choice(self.n_states, p=row))
        self.state = nxt
        return self.observe(nxt), reward, nxt in self.mdp.terminal_states


GRID_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))  # up, right, down, left


def gridworld_mdp(size: int = 5, horizon: int = 200, goal_reward: float = 1.0,
                  step_penalty: float = -0.01) -> TabularMDP:
    """Start top-left, goal bottom-right. Entering the goal pays ``goal_reward``;
    every other move costs ``step_penalty``; the goal is absorbing with zero reward."""
    S = size * size
    goal = S - 1
    P = np.zeros((S, 4, S))
    R = np.full((S, 4), step_penalty)
    for s in range(S):
        r, c = divmod(s, size)
        for a, (dr, dc) in enumerate(GRID_MOVES):
            if s == goal:
                P[s, a, s] = 1.0
                R[s, a] = 0.0
                continue
            nr, nc = min(max(r + dr, 0), size - 1), min(max(c + dc, 0), size - 1)
            nxt = nr * size + nc
            P[s, a, nxt] = 1.0
            if nxt == goal:
                R[s, a] = goal_reward
    mu = np.zeros(S)
    mu[0] = 1.0
    return TabularMDP(P, R, horizon, mu, terminal_states=(goal,))


def gridworld_5x5(horizon: int = 200) -> TabularEnv:
    return TabularEnv(gridworld_mdp(5, horizon))


def chain_mdp(n: int, horizon: int | None = None) -> TabularMDP:
    """States 0..n-1, actions 0=left, 1=right; stepping onto n-1 pays 1.0, which is absorbing."""
    if n < 2:
        raise ValueError("chain needs at least 2 states")
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2))
    end = n - 1
    for s in range(n):
        if s == end:
            P[s, :, s] = 1.0
            continue
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, s + 1] = 1.0
        if s + 1 == end:
            R[s, 1] = 1.0
    mu = np.zeros(n)
    mu[0] = 1.0
    return TabularMDP(P, R, horizon if horizon is not None else 2 * n, mu, terminal_states=(end,))


class PointMass2D:
    """Point mass in the unit box: state (x, y, vx, vy), action = 2-D acceleration."""

    discrete = False
    obs_dim = 4
    action_dim = 2

    def __init__(self, horizon: int = 200, goal=(0.5, 0.5), dt: float = 0.1):
        self.horizon = horizon
        self.goal = np.asarray(goal, dtype=np.float64)
        self.dt = dt
        self.state = np.zeros(4)

    def action_features(self, actions) -> np.ndarray:
        return np.asarray(actions, dtype=np.float64)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        pos = np.array([-0.5, -0.5]) + rng.uniform(-0.1, 0.1, size=2)
        self.state = np.concatenate([pos, np.zeros(2)])
        return self.state.copy()

    def step(self, action):
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        pos, vel = self.state[:2], self.state[2:]
        vel = np.clip(vel + self.dt * a, -1.0, 1.0)
        pos = np.clip(pos + self.dt * vel, -1.0, 1.0)
        self.state = np.concatenate([pos, vel])
        reward = -float(np.linalg.norm(pos - self.goal)) - 0.01 * float(a @ a)
        return self.state.copy(), reward, False


def point_mass_env(horizon: int = 200) -> PointMass2D:
    return PointMass2D(horizon)


def make_env(name: str, horizon: int | None = None):
    if name == "gridworld":
        return gridworld_5x5(horizon or 200)
    if name.startswith("chain"):
        n = int(name[5:] or 5)
        return TabularEnv(chain_mdp(n, horizon))
    if name == "pointmass":
        return point_mass_env(horizon or 200)
    raise ValueError(f"unknown env {name!r}")


def rollout(env, act: Callable[[np.ndarray, int, int], object], rng: np.random.Generator,
            horizon: int | None = None) -> tuple[Transitions, np.ndarray]:
    """Run one episode. ``act(obs, state_id, t)`` picks the action; returns (transitions, hidden rewards)."""
    T = horizon or env.horizon
    obs = env.reset(rng)
    discrete = env.discrete
    rows = []
    for t in range(T):
        sid = env.state if discrete else -1
        a = act(obs, sid, t)
        nobs, r, done = env.step(a)
        nsid = env.state if discrete else -1
        rows.append((obs, a, nobs, done, sid, nsid, r))
        obs = nobs
        if done:
            break
    obs_, acts, nobs_, dones, sids, nsids, rews = zip(*rows)
    tr = Transitions(
        observations=np.array(obs_, dtype=np.float64),
        actions=np.array(acts, dtype=np.int64 if discrete else np.float64),
        next_observations=np.array(nobs_, dtype=np.float64),
        dones=np.array(dones, dtype=bool),
        state_ids=np.array(sids, dtype=np.int64) if discrete else None,
        next_state_ids=np.array(nsids, dtype=np.int64) if discrete else None,
    )
    return tr, np.array(rews, dtype=np.float64)


def layout_for(regime: dict, T: int, rng: np.random.Generator) -> BagLayout:
    """Build a layout from a regime dict: {'kind': 'fixed', 'length': n} /
    {'kind': 'arbitrary', 'len_range': [lo, hi], 'interval_range': [a, b]} / {'kind': 'trajectory'}."""
    kind = regime["kind"]
    if kind == "fixed":
        return partition_fixed(T, min(int(regime["length"]), T))
    if kind == "trajectory":
        return partition_trajectory(T)
    if kind == "arbitrary":
        return partition_arbitrary(T, regime["len_range"], regime["interval_range"], rng)
    raise ValueError(f"unknown bag regime {kind!r}")
