"""Exact objectives, brute-force policy search and the bag/redistribution equivalence check
for tiny tabular BRMDPs.

Policies are time-dependent and deterministic: ``table[t][s]`` is the action
taken in state ``s`` at step ``t``. Objectives are undiscounted finite-horizon
sums, computed either by propagating the state distribution forward or by
enumerating every (state sequence, action sequence) pair.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .envlab import BagLayout, TabularMDP, partition_fixed

TIE_TOL = 1e-9
MAX_POLICIES = 10**6
MAX_TRAJECTORIES = 10**6


class EnumerationBoundError(ValueError):
    pass


@dataclass(frozen=True)
class DetPolicy:
    table: tuple  # T rows, each a tuple of S actions

    @classmethod
    def from_array(cls, arr) -> DetPolicy:
        return cls(tuple(tuple(int(a) for a in row) for row in np.asarray(arr)))

    @classmethod
    def constant(cls, action: int, n_states: int, horizon: int) -> DetPolicy:
        return cls(tuple((action,) * n_states for _ in range(horizon)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.table, dtype=np.int64)

    def __call__(self, state: int, t: int) -> int:
        return self.table[t][state]


@dataclass(frozen=True)
class ObjectiveReport:
    J: float
    J_traj: float
    J_B: float


def enumerate_policies(mdp: TabularMDP, horizon: int | None = None) -> np.ndarray:
    """All time-dependent deterministic policies as an int array [K, T, S]."""
    T = horizon or mdp.horizon
    S, A = mdp.n_states, mdp.n_actions
    if A ** (S * T) > MAX_POLICIES:
        raise EnumerationBoundError(f"|A|^(|S|T) = {A}^{S * T} exceeds {MAX_POLICIES}")
    flat = np.array(list(itertools.product(range(A), repeat=S * T)), dtype=np.int64)
    return flat.reshape(-1, T, S)


# --------------------------------------------------------------------------- forward propagation


def state_distributions(mdp: TabularMDP, policy) -> np.ndarray:
    """d[t, s] = P(s_t = s) under the policy, for t < T."""
    pol = policy.array if isinstance(policy, DetPolicy) else np.asarray(policy)
    T, S = pol.shape
    d = np.zeros((T, S))
    d[0] = mdp.initial_dist
    idx = np.arange(S)
    for t in range(T - 1):
        d[t + 1] = d[t] @ mdp.transition[idx, pol[t]]
    return d


def exact_objective(mdp: TabularMDP, policy, reward: np.ndarray | None = None) -> float:
    """Expected undiscounted sum of a per-(s, a) reward table over the horizon."""
    _check_rows(mdp)
    r = mdp.hidden_reward if reward is None else np.asarray(reward, dtype=np.float64)
    pol = policy.array if isinstance(policy, DetPolicy) else np.asarray(policy)
    d = state_distributions(mdp, pol)
    idx = np.arange(mdp.n_states)
    return float(sum(d[t] @ r[idx, pol[t]] for t in range(pol.shape[0])))


def _check_rows(mdp: TabularMDP) -> None:
    if np.abs(mdp.transition.sum(-1) - 1.0).max() > 1e-12:
        raise ValueError("transition rows are not normalized")


@dataclass
class VIResult:
    values: np.ndarray  # [T + 1, S]
    q: np.ndarray  # [T, S, A]
    greedy: list  # greedy[t][s] = frozenset of optimal actions

    @property
    def optimal_value(self) -> float:
        return float(self._mu @ self.values[0])

    _mu: np.ndarray = field(default=None, repr=False)

    def policy(self) -> DetPolicy:
        """Greedy policy, lowest action index among ties."""
        return DetPolicy(tuple(tuple(min(acts) for acts in row) for row in self.greedy))


def value_iteration(mdp: TabularMDP, reward: np.ndarray | None = None, horizon: int | None = None,
                    tol: float = TIE_TOL) -> VIResult:
    """Finite-horizon backward induction."""
    _check_rows(mdp)
    r = mdp.hidden_reward if reward is None else np.asarray(reward, dtype=np.float64)
    T = horizon or mdp.horizon
    S, A = r.shape
    V = np.zeros((T + 1, S))
    Q = np.zeros((T, S, A))
    greedy = [None] * T
    for t in reversed(range(T)):
        Q[t] = r + mdp.transition @ V[t + 1]
        V[t] = Q[t].max(axis=1)
        greedy[t] = [frozenset(np.flatnonzero(Q[t, s] >= V[t, s] - tol).tolist()) for s in range(S)]
    return VIResult(V, Q, greedy, _mu=mdp.initial_dist)


# --------------------------------------------------------------------------- trajectory enumeration


class TrajectorySpace:
    """Every (state sequence, action sequence) pair of a horizon-T rollout and its probability
    structure, so that any trajectory-level return can be averaged exactly under any policy."""

    def __init__(self, mdp: TabularMDP, horizon: int | None = None, bound: int = MAX_TRAJECTORIES):
        _check_rows(mdp)
        self.mdp = mdp
        T = self.T = horizon or mdp.horizon
        S, A = mdp.n_states, mdp.n_actions
        if S**T > bound or S**T * A**T > 10 * bound:
            raise EnumerationBoundError(f"|S|^T = {S}^{T} trajectories exceed the enumeration bound")
        self.states = np.array(list(itertools.product(range(S), repeat=T)), dtype=np.int64)  # [N, T]
        self.actions = np.array(list(itertools.product(range(A), repeat=T)), dtype=np.int64)  # [M, T]
        self._action_code = A ** np.arange(T - 1, -1, -1)
        # prob[n, m] = mu(s_0) * prod_t P(s_{t+1} | s_t, a_t)
        N, M = len(self.states), len(self.actions)
        prob = np.broadcast_to(mdp.initial_dist[self.states[:, 0]][:, None], (N, M)).copy()
        for t in range(T - 1):
            s, s2 = self.states[:, t][:, None], self.states[:, t + 1][:, None]
            prob *= mdp.transition[s, self.actions[:, t][None, :], s2]
        self.prob = prob

    def reachable(self) -> np.ndarray:
        return self.prob > 0

    def returns(self, fn: Callable[[np.ndarray, np.ndarray], float]) -> np.ndarray:
        """G[n, m] = fn(states_n, actions_m) on reachable pairs, 0 elsewhere."""
        G = np.zeros(self.prob.shape)
        for n, m in zip(*np.nonzero(self.prob)):
            G[n, m] = fn(self.states[n], self.actions[m])
        return G

    def table_returns(self, reward: np.ndarray) -> np.ndarray:
        return reward[self.states[:, None, :], self.actions[None, :, :]].sum(-1)

    def expected(self, policies: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Exact expectation of trajectory return G under each policy in [K, T, S]."""
        policies = np.asarray(policies)
        if policies.ndim == 2:
            policies = policies[None]
        t = np.arange(self.T)
        acts = policies[:, t[None, :], self.states]  # [K, N, T]
        m = acts @ self._action_code  # [K, N]
        n = np.arange(len(self.states))[None, :]
        return (self.prob[n, m] * G[n, m]).sum(axis=1)


def hidden_bag_reward(mdp: TabularMDP):
    """R(B) = sum of the hidden per-(s, a) rewards inside the bag."""
    def fn(states, actions, bag):
        return float(mdp.hidden_reward[states[bag.start:bag.end], actions[bag.start:bag.end]].sum())
    return fn


def bagged_return_fn(layout: BagLayout, bag_reward_fn):
    def fn(states, actions):
        return float(sum(bag_reward_fn(states, actions, b) for b in layout))
    return fn


def _layout(layout_fn, T: int) -> BagLayout:
    return layout_fn(T) if callable(layout_fn) else layout_fn


def exact_bagged_objective(mdp: TabularMDP, policy, layout_fn, bag_reward_fn=None,
                           space: TrajectorySpace | None = None) -> float:
    """Expected sum of bagged rewards, by exhaustive trajectory enumeration."""
    space = space or TrajectorySpace(mdp)
    layout = _layout(layout_fn, space.T)
    brf = bag_reward_fn or hidden_bag_reward(mdp)
    G = space.returns(bagged_return_fn(layout, brf))
    pol = policy.array if isinstance(policy, DetPolicy) else np.asarray(policy)
    return float(space.expected(pol, G)[0])


def trajectory_objective(mdp: TabularMDP, policy, space: TrajectorySpace | None = None) -> float:
    """Expected trajectory return (sum of hidden rewards observed once at the end)."""
    space = space or TrajectorySpace(mdp)
    pol = policy.array if isinstance(policy, DetPolicy) else np.asarray(policy)
    return float(space.expected(pol, space.table_returns(mdp.hidden_reward))[0])


def objective_report(mdp: TabularMDP, policy, layout_fn, bag_reward_fn=None) -> ObjectiveReport:
    space = TrajectorySpace(mdp)
    return ObjectiveReport(
        J=exact_objective(mdp, policy),
        J_traj=trajectory_objective(mdp, policy, space),
        J_B=exact_bagged_objective(mdp, policy, layout_fn, bag_reward_fn, space),
    )


def optimal_set(values: np.ndarray, policies: np.ndarray, tol: float = TIE_TOL) -> frozenset:
    best = values.max()
    return frozenset(DetPolicy.from_array(policies[k]) for k in np.flatnonzero(values >= best - tol))


def optimal_policy_set(mdp: TabularMDP, objective=None, tol: float = TIE_TOL) -> frozenset:
    """All argmax policies by exhaustive enumeration.

    ``objective`` is None (hidden reward), a per-(s, a) reward table, or a
    trajectory-return callable ``fn(states, actions) -> float``.
    """
    policies = enumerate_policies(mdp)
    if objective is None or isinstance(objective, np.ndarray):
        r = mdp.hidden_reward if objective is None else objective
        values = np.array([exact_objective(mdp, p, r) for p in policies])
    else:
        space = TrajectorySpace(mdp)
        values = space.expected(policies, space.returns(objective))
    return optimal_set(values, policies, tol)


# --------------------------------------------------------------------------- theorem check


@dataclass
class Theorem1Report:
    applicable: bool
    bag_sum_violation: float
    objective_gaps: np.ndarray
    optimal_bagged: frozenset
    optimal_redistributed: frozenset
    reason: str = ""

    @property
    def max_gap(self) -> float:
        return float(self.objective_gaps.max())

    @property
    def worst_policy(self) -> int:
        return int(self.objective_gaps.argmax())

    @property
    def sets_equal(self) -> bool:
        return self.optimal_bagged == self.optimal_redistributed

    @property
    def objectives_equal(self) -> bool:
        return self.max_gap <= TIE_TOL

    @property
    def passed(self) -> bool:
        return self.applicable and self.objectives_equal and self.sets_equal


def check_theorem1(mdp: TabularMDP, layout_fn, redistribution, bag_reward_fn=None,
                   tol: float = TIE_TOL) -> Theorem1Report:
    """Compare the bagged objective with the redistributed-reward objective for every policy.

    ``redistribution`` is a per-(s, a) table or a callable
    ``fn(states, actions) -> per-step rewards``. The bag-sum condition is
    checked on every reachable trajectory first; when it fails the report
    is marked not applicable but the comparison is still carried out.
    """
    space = TrajectorySpace(mdp)
    layout = _layout(layout_fn, space.T)
    brf = bag_reward_fn or hidden_bag_reward(mdp)
    if isinstance(redistribution, np.ndarray):
        table = redistribution
        redistribution = lambda s, a: table[s, a]  # noqa: E731
    G_B = np.zeros(space.prob.shape)
    G_r = np.zeros(space.prob.shape)
    violation = 0.0
    for n, m in zip(*np.nonzero(space.prob)):
        s, a = space.states[n], space.actions[m]
        rhat = np.asarray(redistribution(s, a), dtype=np.float64)
        R = np.array([brf(s, a, b) for b in layout])
        sums = np.array([rhat[b.start:b.end].sum() for b in layout])
        violation = max(violation, float(np.abs(sums - R).max()))
        G_B[n, m] = R.sum()
        G_r[n, m] = rhat.sum()
    policies = enumerate_policies(mdp)
    J_B = space.expected(policies, G_B)
    J_r = space.expected(policies, G_r)
    reasons = []
    if not layout.neighboring:
        reasons.append("bags do not tile the trajectory")
    if violation > tol:
        reasons.append(f"bag-sum condition violated by {violation:.3g}")
    return Theorem1Report(
        applicable=not reasons,
        bag_sum_violation=violation,
        objective_gaps=np.abs(J_B - J_r),
        optimal_bagged=optimal_set(J_B, policies, tol),
        optimal_redistributed=optimal_set(J_r, policies, tol),
        reason="; ".join(reasons),
    )


# --------------------------------------------------------------------------- random instances


def random_mdp(rng: np.random.Generator, n_states: int = 3, n_actions: int = 2, horizon: int = 4,
               deterministic: bool = False) -> TabularMDP:
    S, A = n_states, n_actions
    if deterministic:
        P = np.zeros((S, A, S))
        P[np.arange(S)[:, None], np.arange(A)[None, :], rng.integers(0, S, size=(S, A))] = 1.0
        mu = np.zeros(S)
        mu[rng.integers(S)] = 1.0
    else:
        P = rng.dirichlet(np.ones(S), size=(S, A))
        mu = rng.dirichlet(np.ones(S))
    # renormalize after rounding so rows sum to 1 within float noise
    P /= P.sum(-1, keepdims=True)
    mu /= mu.sum()
    R = rng.normal(size=(S, A)).round(3)
    return TabularMDP(P, R, horizon, mu)


def zero_sum_within_bags(layout: BagLayout, v: np.ndarray) -> np.ndarray:
    """Project ``v`` onto {c : sum of c over every bag is 0}."""
    G = layout.indicator()
    return v - G.T @ np.linalg.lstsq(G @ G.T, G @ v, rcond=None)[0]


def perturbed_redistribution(mdp: TabularMDP, layout: BagLayout, eps: float, seed: int = 0):
    """Hidden reward plus a trajectory-dependent perturbation that sums to zero inside every bag."""
    def fn(states, actions):
        key = int(states @ (7 ** np.arange(len(states)))) + 1000 * int(actions @ (3 ** np.arange(len(actions))))
        v = np.random.default_rng([seed, key]).normal(size=len(states))
        return mdp.hidden_reward[states, actions] + eps * zero_sum_within_bags(layout, v)
    return fn


def nonmarkov_bag_reward(mdp: TabularMDP, bonus: float = 0.5):
    """Bag reward = hidden sum plus a bonus when the bag's first and last actions agree."""
    def fn(states, actions, bag):
        base = float(mdp.hidden_reward[states[bag.start:bag.end], actions[bag.start:bag.end]].sum())
        return base + (bonus if actions[bag.start] == actions[bag.last] else 0.0)
    return fn


def uniform_redistribution(layout: BagLayout, bag_reward_fn, eps: float = 0.0, seed: int = 0):
    """Each step gets R(B)/n of its bag, plus an optional bag-sum-preserving perturbation."""
    def fn(states, actions):
        out = np.zeros(len(states))
        for b in layout:
            out[b.start:b.end] = bag_reward_fn(states, actions, b) / b.length
        if eps:
            key = int(states @ (7 ** np.arange(len(states)))) + 1000 * int(actions @ (3 ** np.arange(len(actions))))
            out += eps * zero_sum_within_bags(layout, np.random.default_rng([seed, key]).normal(size=len(states)))
        return out
    return fn


def random_theorem1_instance(rng: np.random.Generator, deterministic: bool):
    """(mdp, layout, redistribution, bag_reward_fn) with the bag-sum condition satisfied."""
    S = int(rng.integers(1, 4))
    T = int(rng.integers(1, 5))
    mdp = random_mdp(rng, S, 2, T, deterministic)
    layout = partition_fixed(T, int(rng.integers(1, T + 1)))
    kind = int(rng.integers(3))
    seed = int(rng.integers(2**31))
    if kind == 0:
        return mdp, layout, mdp.hidden_reward.copy(), None
    if kind == 1:
        return mdp, layout, perturbed_redistribution(mdp, layout, 0.3, seed), None
    brf = nonmarkov_bag_reward(mdp, float(rng.uniform(0.1, 1.0)))
    return mdp, layout, uniform_redistribution(layout, brf, 0.2, seed), brf
