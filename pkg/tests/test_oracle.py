import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlbr import envlab as el
from rlbr import oracle as orc
from rlbr.oracle import DetPolicy


def monte_carlo_objective(mdp, policy, n, rng):
    """Vectorized rollouts of a time-dependent deterministic policy."""
    pol = policy.array
    s = rng.choice(mdp.n_states, size=n, p=mdp.initial_dist)
    total = np.zeros(n)
    cum = mdp.transition.cumsum(-1)
    for t in range(pol.shape[0]):
        a = pol[t][s]
        total += mdp.hidden_reward[s, a]
        u = rng.random(n)[:, None]
        s = np.minimum((u > cum[s, a]).sum(-1), mdp.n_states - 1)
    return total.mean(), total.std() / np.sqrt(n)


def brute_force_trajectory_sum(mdp, policy, layout, bag_reward_fn):
    """Explicit recursion over every state path, independent of TrajectorySpace."""
    T = mdp.horizon
    total = 0.0
    for path in itertools.product(range(mdp.n_states), repeat=T):
        p = mdp.initial_dist[path[0]]
        acts = [policy(path[t], t) for t in range(T)]
        for t in range(T - 1):
            p *= mdp.transition[path[t], acts[t], path[t + 1]]
        if p == 0:
            continue
        total += p * sum(bag_reward_fn(np.array(path), np.array(acts), b) for b in layout)
    return total


def two_state_chain():
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[0, 1, 1] = P[1, :, 1] = 1.0
    R = np.array([[0.0, 1.0], [0.0, 0.0]])
    return el.TabularMDP(P, R, 2, np.array([1.0, 0.0]), terminal_states=(1,))


class TestExactObjective:
    def test_two_state_chain(self):
        mdp = two_state_chain()
        assert orc.exact_objective(mdp, DetPolicy.constant(1, 2, 2)) == 1.0

    def test_zero_reward(self):
        mdp = el.TabularMDP(np.full((3, 2, 3), 1 / 3), np.zeros((3, 2)), 4, np.full(3, 1 / 3))
        assert orc.exact_objective(mdp, DetPolicy.constant(0, 3, 4)) == 0.0

    def test_monte_carlo(self):
        rng = np.random.default_rng(123)
        mdp = orc.random_mdp(rng, 3, 2, 4)
        pol = DetPolicy.from_array(rng.integers(0, 2, size=(4, 3)))
        mc, se = monte_carlo_objective(mdp, pol, 10**6, rng)
        assert abs(orc.exact_objective(mdp, pol) - mc) <= 3 * se

    def test_non_normalized_rows(self):
        mdp = two_state_chain()
        mdp.transition[0, 0, 0] = 0.5
        with pytest.raises(ValueError):
            orc.exact_objective(mdp, DetPolicy.constant(0, 2, 2))


class TestBaggedObjective:
    def test_neighboring_equals_hidden_objective(self):
        rng = np.random.default_rng(5)
        for det in (True, False):
            mdp = orc.random_mdp(rng, 3, 2, 4, det)
            pol = DetPolicy.from_array(rng.integers(0, 2, size=(4, 3)))
            for n in (1, 2, 3, 4):
                jb = orc.exact_bagged_objective(mdp, pol, lambda T: el.partition_fixed(T, n))
                assert jb == pytest.approx(orc.exact_objective(mdp, pol), abs=1e-12)

    def test_whole_trajectory_bag_equals_trajectory_objective(self):
        rng = np.random.default_rng(6)
        mdp = orc.random_mdp(rng, 3, 2, 4)
        pol = DetPolicy.from_array(rng.integers(0, 2, size=(4, 3)))
        rep = orc.objective_report(mdp, pol, el.partition_trajectory)
        assert rep.J_B == pytest.approx(rep.J_traj, abs=1e-12)
        assert rep.J == pytest.approx(rep.J_traj, abs=1e-12)

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            mdp = orc.random_mdp(rng, 3, 2, 3, deterministic=bool(trial % 2))
            pol = DetPolicy.from_array(rng.integers(0, 2, size=(3, 3)))
            lay = el.partition_fixed(3, 2)
            brf = orc.nonmarkov_bag_reward(mdp, 0.7)
            got = orc.exact_bagged_objective(mdp, pol, lay, brf)
            assert got == pytest.approx(brute_force_trajectory_sum(mdp, pol, lay, brf), abs=1e-12)

    def test_enumeration_guard(self):
        mdp = el.gridworld_mdp(horizon=8)
        with pytest.raises(orc.EnumerationBoundError):
            orc.TrajectorySpace(mdp)


class TestOptimalPolicySet:
    def test_single_state_prefers_action_zero(self):
        P = np.ones((1, 2, 1))
        mdp = el.TabularMDP(P, np.array([[1.0, 0.0]]), 3, np.array([1.0]))
        assert orc.optimal_policy_set(mdp) == {DetPolicy.constant(0, 1, 3)}

    def test_symmetric_tie(self):
        mdp = el.TabularMDP(np.ones((1, 2, 1)), np.array([[0.5, 0.5]]), 1, np.array([1.0]))
        assert orc.optimal_policy_set(mdp) == {DetPolicy(((0,),)), DetPolicy(((1,),))}

    def test_matches_backward_induction(self):
        rng = np.random.default_rng(8)
        for det in (True, False):
            mdp = orc.random_mdp(rng, 3, 2, 4, det)
            best = orc.optimal_policy_set(mdp)
            vi = orc.value_iteration(mdp)
            for pol in best:
                assert orc.exact_objective(mdp, pol) == pytest.approx(vi.optimal_value, abs=1e-9)
            assert vi.policy() in best

    def test_bound(self):
        mdp = orc.random_mdp(np.random.default_rng(0), 3, 2, 7)
        with pytest.raises(orc.EnumerationBoundError):
            orc.optimal_policy_set(mdp)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 100.0))
    def test_invariant_under_positive_scaling(self, seed, scale):
        rng = np.random.default_rng(seed)
        mdp = orc.random_mdp(rng, 2, 2, 3, deterministic=bool(seed % 2))
        assert orc.optimal_policy_set(mdp) == orc.optimal_policy_set(mdp, mdp.hidden_reward * scale)


class TestValueIteration:
    def test_gridworld_matches_exhaustive_search(self):
        mdp = el.gridworld_mdp(horizon=8)
        best = -np.inf
        for seq in itertools.product(range(4), repeat=8):
            s, total = 0, 0.0
            for a in seq:
                total += mdp.hidden_reward[s, a]
                s = int(np.argmax(mdp.transition[s, a]))
            best = max(best, total)
        vi = orc.value_iteration(mdp)
        assert vi.optimal_value == pytest.approx(best, abs=1e-12)
        assert best == pytest.approx(0.93)

    def test_zero_reward(self):
        mdp = el.TabularMDP(np.full((3, 2, 3), 1 / 3), np.zeros((3, 2)), 5, np.full(3, 1 / 3))
        assert not orc.value_iteration(mdp).values.any()

    def test_chain_moves_right(self):
        vi = orc.value_iteration(el.chain_mdp(3))
        assert all(1 in vi.greedy[t][s] for t in range(vi.q.shape[0]) for s in range(3))
        # with no slack in the horizon, right is the unique best action on the way
        tight = orc.value_iteration(el.chain_mdp(3, horizon=2))
        assert tight.greedy[0][0] == {1} and tight.greedy[1][1] == {1}
        assert tight.optimal_value == 1.0


class TestTheorem1:
    def test_exact_redistribution(self):
        rng = np.random.default_rng(9)
        for det in (True, False):
            mdp = orc.random_mdp(rng, 3, 2, 4, det)
            rep = orc.check_theorem1(mdp, lambda T: el.partition_fixed(T, 2), mdp.hidden_reward)
            assert rep.passed, rep.reason

    def test_zero_sum_perturbation_inside_one_bag(self):
        rng = np.random.default_rng(10)
        mdp = orc.random_mdp(rng, 3, 2, 4, deterministic=True)
        lay = el.partition_fixed(4, 2)

        def rhat(states, actions):
            r = mdp.hidden_reward[states, actions].copy()
            # alternating +eps/-eps inside the second bag keeps its sum
            r[2] += 0.25
            r[3] -= 0.25
            return r

        rep = orc.check_theorem1(mdp, lay, rhat)
        assert rep.applicable and rep.passed

    def test_injected_fault(self):
        rng = np.random.default_rng(11)
        mdp = orc.random_mdp(rng, 2, 2, 3, deterministic=True)
        lay = el.partition_fixed(3, 3)
        target = mdp.initial_dist.argmax()

        def rhat(states, actions):
            r = mdp.hidden_reward[states, actions].copy()
            if actions[0] == 1:
                r[0] += 0.1
            return r

        rep = orc.check_theorem1(mdp, lay, rhat)
        assert not rep.applicable
        assert rep.bag_sum_violation == pytest.approx(0.1)
        assert rep.max_gap == pytest.approx(0.1, abs=1e-12)
        worst = orc.enumerate_policies(mdp)[rep.worst_policy]
        assert worst[0, target] == 1

    def test_random_instances_all_pass(self):
        rng = np.random.default_rng(12)
        for i in range(20):
            mdp, lay, rhat, brf = orc.random_theorem1_instance(rng, deterministic=bool(i % 2))
            rep = orc.check_theorem1(mdp, lay, rhat, brf)
            assert rep.passed, rep.reason
