import numpy as np
import pytest

from rlbr import envlab as el
from rlbr import oracle
from rlbr.agent import (
    IRCRRedistributor, LoopConfig, QLearner, QTable, RBTRedistributor, RawRedistributor, Redistributor,
    ReplayBuffer, SacConfig, SacLite, TransitionBatch, evaluate, linear_epsilon, make_redistributor,
    q_update, q_update_batch, read_log, rlbr_loop,
)
from rlbr.agent.loop import check_compatible
from rlbr.rbt import RBTConfig


class HiddenRedistributor(Redistributor):
    """Test-only: writes the true per-step rewards into the buffer."""

    def relabel(self, buffer):
        with el.hidden_access():
            for i, it in enumerate(buffer.items):
                buffer.set_relabeled(i, it.traj.hidden_rewards)


def episode(env, rng, bag_len=3, horizon=None):
    tr, r = el.rollout(env, lambda o, s, t: int(rng.integers(env.n_actions)), rng, horizon)
    lay = el.partition_fixed(len(tr), min(bag_len, len(tr)))
    return el.BaggedTrajectory.build(tr, r, lay), env.action_features(tr.actions)


def small_loop(**kw):
    base = dict(total_steps=600, eval_interval=200, eval_episodes=1, pretrain_steps=100, pretrain_iters=5,
                iters_per_traj=1, batch_size=16)
    base.update(kw)
    return LoopConfig(**base)


# --------------------------------------------------------------------------- buffer


class TestBuffer:
    def test_add_and_sample(self):
        env = el.gridworld_5x5(20)
        rng = np.random.default_rng(0)
        buf = ReplayBuffer()
        for _ in range(3):
            buf.add(*episode(env, rng))
        assert len(buf) == 3
        assert buf.n_steps == sum(len(it) for it in buf.items)
        b = buf.sample(32, rng)
        assert b.observations.shape == (32, 25)
        assert np.all(b.rewards == 0.0)
        assert b.state_ids.shape == (32,)

    def test_bag_rewards_read_only(self):
        env = el.gridworld_5x5(20)
        buf = ReplayBuffer()
        buf.add(*episode(env, np.random.default_rng(0)))
        with pytest.raises(ValueError):
            buf.items[0].traj.bag_rewards[0] = 5.0

    def test_relabel_reaches_samples(self):
        env = el.gridworld_5x5(10)
        rng = np.random.default_rng(1)
        buf = ReplayBuffer()
        buf.add(*episode(env, rng))
        buf.add(*episode(env, rng))
        buf.set_all_relabeled([np.full(len(it), float(i + 1)) for i, it in enumerate(buf.items)])
        b = buf.sample(200, rng)
        assert set(np.unique(b.rewards)) <= {1.0, 2.0}
        assert len(np.unique(b.rewards)) == 2

    def test_relabel_shape_checked(self):
        env = el.gridworld_5x5(10)
        buf = ReplayBuffer()
        buf.add(*episode(env, np.random.default_rng(0)))
        with pytest.raises(ValueError):
            buf.set_relabeled(0, np.zeros(len(buf.items[0]) + 1))
        with pytest.raises(ValueError):
            buf.set_all_relabeled([])

    def test_fifo_eviction_whole_trajectories(self):
        env = el.gridworld_5x5(10)
        rng = np.random.default_rng(2)
        buf = ReplayBuffer(capacity=25)
        uids = [buf.add(*episode(env, rng)) for _ in range(6)]
        assert buf.n_steps <= 25 or len(buf) == 1
        kept = [it.uid for it in buf.items]
        assert kept == uids[-len(kept):]
        # flat store rebuilt consistently after eviction
        buf.set_all_relabeled([np.full(len(it), float(it.uid)) for it in buf.items])
        b = buf.sample(300, rng)
        assert set(np.unique(b.rewards)) == {float(u) for u in kept}

    def test_empty_sample(self):
        with pytest.raises(ValueError):
            ReplayBuffer().sample(4, np.random.default_rng(0))

    def test_bad_capacity(self):
        with pytest.raises(ValueError):
            ReplayBuffer(0)

    def test_rbt_view(self):
        env = el.gridworld_5x5(12)
        buf = ReplayBuffer()
        traj, feats = episode(env, np.random.default_rng(3), bag_len=4)
        buf.add(traj, feats)
        view = buf.rbt_view()[0]
        np.testing.assert_array_equal(view.actions, feats)
        np.testing.assert_array_equal(view.bag_rewards, traj.bag_rewards)


# --------------------------------------------------------------------------- Q-learning


class TestQLearning:
    def test_zero_lr_no_change(self):
        t = QTable(3, 2, lr=0.0)
        q_update(t, 0, 1, 5.0, 1, False)
        assert np.all(t.values == 0)

    def test_gamma_zero_target_is_reward(self):
        t = QTable(3, 2, lr=1.0, gamma=0.0)
        t.values[1] = [10.0, 20.0]
        td = q_update(t, 0, 1, 0.7, 1, False)
        assert t.values[0, 1] == 0.7
        assert td == 0.7

    def test_bootstrap_and_terminal(self):
        t = QTable(3, 2, lr=0.5, gamma=0.9)
        t.values[2] = [1.0, 3.0]
        q_update(t, 0, 0, 1.0, 2, False)
        assert t.values[0, 0] == pytest.approx(0.5 * (1.0 + 0.9 * 3.0))
        q_update(t, 1, 0, 1.0, 2, True)
        assert t.values[1, 0] == pytest.approx(0.5)

    def test_unknown_state(self):
        t = QTable(3, 2)
        with pytest.raises(IndexError):
            q_update(t, 3, 0, 0.0, 0, False)
        with pytest.raises(IndexError):
            q_update_batch(t, [0], [0], [0.0], [-1], [False])

    def test_bad_gamma(self):
        with pytest.raises(ValueError):
            QTable(2, 2, gamma=1.5)

    def test_batch_matches_single_for_distinct_pairs(self):
        rng = np.random.default_rng(0)
        a, b = QTable(4, 2, lr=0.3, gamma=0.9), QTable(4, 2, lr=0.3, gamma=0.9)
        a.values[:] = b.values[:] = rng.normal(size=(4, 2))
        s, act, r, s2, d = [0, 1, 2], [1, 0, 1], [0.5, -1.0, 2.0], [3, 3, 3], [False, True, False]
        q_update_batch(a, s, act, r, s2, d)
        for x in zip(s, act, r, s2, d):
            q_update(b, *x)
        np.testing.assert_allclose(a.values, b.values)

    def test_batch_duplicates_average(self):
        t = QTable(2, 1, lr=1.0, gamma=0.0)
        q_update_batch(t, [0, 0], [0, 0], [1.0, 3.0], [1, 1], [True, True])
        assert t.values[0, 0] == 2.0

    def test_linear_epsilon(self):
        assert linear_epsilon(0, 100) == 1.0
        assert linear_epsilon(10, 100) == pytest.approx(0.525)
        assert linear_epsilon(20, 100) == pytest.approx(0.05)
        assert linear_epsilon(90, 100) == pytest.approx(0.05)

    def test_schedule_starts_with_learning(self):
        q = QLearner(4, 2, total_steps=1000)
        assert q.epsilon(500) == 1.0
        q.start(500)
        q.start(700)  # later calls do not move the start
        assert q.epsilon(500) == 1.0
        assert q.epsilon(600) == pytest.approx(0.05)

    def test_greedy_act_first_argmax(self):
        q = QLearner(2, 3, total_steps=10)
        q.table.values[0] = [1.0, 2.0, 2.0]
        assert q.act(None, 0, 0, np.random.default_rng(0), explore=False) == 1


# --------------------------------------------------------------------------- SAC


def one_transition(obs_dim=3, act_dim=2):
    return TransitionBatch(observations=np.array([[0.1, -0.2, 0.3]]), actions=np.array([[0.5, -0.5]]),
                           rewards=np.array([1.5]), next_observations=np.array([[0.0, 0.2, -0.1]]),
                           dones=np.array([False]))


class TestSac:
    def test_act_in_box(self):
        agent = SacLite(3, 2, seed=0)
        rng = np.random.default_rng(0)
        a = agent.act(np.zeros(3), -1, 0, rng)
        assert a.shape == (2,) and np.all(np.abs(a) < 1)

    def test_alpha_zero_target_deterministic(self):
        agent = SacLite(3, 2, SacConfig(alpha=0.0), seed=0)
        b = one_transition()
        y = agent.critic_targets(b, None, deterministic=True)
        a2 = np.tanh(agent._dist(b.next_observations)[0].data)
        q = min(agent._q(agent.q1_target, b.next_observations, a2).item(),
                agent._q(agent.q2_target, b.next_observations, a2).item())
        assert y[0] == pytest.approx(1.5 + 0.99 * q, abs=1e-12)

    def test_done_cuts_bootstrap(self):
        agent = SacLite(3, 2, seed=0)
        b = one_transition()
        b.dones = np.array([True])
        assert agent.critic_targets(b, np.random.default_rng(0))[0] == 1.5

    def test_critic_loss_by_hand(self):
        agent = SacLite(3, 2, seed=1)
        b = one_transition()
        x = np.concatenate([b.observations, b.actions], axis=-1)

        def mlp(net):
            h = x
            layers = net.layers
            for i, layer in enumerate(layers):
                h = h @ layer.weight.data + layer.bias.data
                if i < len(layers) - 1:
                    h = np.maximum(h, 0.0)
            return h[0, 0]

        y = np.array([0.25])
        expect = (mlp(agent.q1) - 0.25) ** 2 + (mlp(agent.q2) - 0.25) ** 2
        assert agent.critic_loss(b, y).item() == pytest.approx(expect, rel=1e-12)

    def test_polyak_one_copies(self):
        agent = SacLite(3, 2, SacConfig(polyak=1.0), seed=0)
        b = one_transition()
        agent.update(b, np.random.default_rng(0))
        for (_, p), (_, t) in zip(agent.q1.named_parameters(), agent.q1_target.named_parameters()):
            np.testing.assert_array_equal(p.data, t.data)

    def test_small_polyak_moves_target_slightly(self):
        agent = SacLite(3, 2, SacConfig(polyak=0.005, lr=1e-2), seed=0)
        before = [t.data.copy() for _, t in agent.q1_target.named_parameters()]
        agent.update(one_transition(), np.random.default_rng(0))
        after = [t.data for _, t in agent.q1_target.named_parameters()]
        online = [p.data for _, p in agent.q1.named_parameters()]
        for b0, a1, o in zip(before, after, online):
            np.testing.assert_allclose(a1, 0.995 * b0 + 0.005 * o)

    @pytest.mark.parametrize("kw", [{"polyak": 0.0}, {"polyak": 1.5}, {"alpha": -1.0}])
    def test_bad_config(self, kw):
        with pytest.raises(ValueError):
            SacConfig(**kw)

    def test_update_returns_finite(self):
        agent = SacLite(4, 2, seed=0)
        rng = np.random.default_rng(0)
        b = TransitionBatch(rng.normal(size=(8, 4)), rng.uniform(-1, 1, (8, 2)), rng.normal(size=8),
                            rng.normal(size=(8, 4)), np.zeros(8, dtype=bool))
        out = agent.update(b, rng)
        assert np.isfinite(out["critic_loss"]) and np.isfinite(out["actor_loss"])


# --------------------------------------------------------------------------- redistributors


class TestRedistributors:
    def buffer(self, n=4, bag_len=3):
        env = el.gridworld_5x5(15)
        rng = np.random.default_rng(0)
        buf = ReplayBuffer()
        for _ in range(n):
            buf.add(*episode(env, rng, bag_len))
        return buf

    def test_raw(self):
        buf = self.buffer()
        RawRedistributor().relabel(buf)
        for it in buf.items:
            np.testing.assert_array_equal(it.relabeled, el.raw_stream(it.traj.layout, it.traj.bag_rewards))

    def test_ircr_rescales_when_extrema_move(self):
        buf = self.buffer(2)
        red = IRCRRedistributor()
        red.relabel(buf)
        first = buf.items[0].relabeled.copy()
        env = el.gridworld_5x5(15)
        # a trajectory with a new extreme bag reward forces the old ones to be redone
        tr, _ = el.rollout(env, lambda o, s, t: 0, np.random.default_rng(0))
        lay = el.partition_fixed(len(tr), len(tr))
        buf.add(el.BaggedTrajectory.build(tr, np.full(len(tr), -5.0), lay), env.action_features(tr.actions))
        red.relabel(buf)
        allR = np.concatenate(buf.bag_rewards())
        expect = (buf.items[0].traj.bag_rewards - allR.min()) / (allR.max() - allR.min())
        assert not np.array_equal(first, buf.items[0].relabeled)
        for b, v in zip(buf.items[0].traj.layout, expect):
            np.testing.assert_allclose(buf.items[0].relabeled[b.start:b.end], v)

    def test_rbt_ready_after_update(self):
        buf = self.buffer()
        red = make_redistributor("rbt", 25, 4, RBTConfig.desk(seq_len=6, relabel_len=6, batch_size=4), seed=0)
        assert isinstance(red, RBTRedistributor) and not red.ready
        red.relabel(buf)  # no-op before training
        assert all(np.all(it.relabeled == 0) for it in buf.items)
        loss = red.update(buf, 3)
        assert red.ready and np.isfinite(loss)
        red.relabel(buf)
        assert any(np.any(it.relabeled != 0) for it in buf.items)

    def test_rrd_ready_after_update(self):
        buf = self.buffer()
        red = make_redistributor("rrd", 25, 4, seed=0)
        red.update(buf, 2)
        red.relabel(buf)
        assert red.ready and red.model.K == 3


# --------------------------------------------------------------------------- loop


class TestLoop:
    def test_bag_one_raw_equals_hidden_rewards(self, tmp_path):
        env = el.gridworld_5x5(40)
        cfg = small_loop(pretrain_steps=0)
        logs = []
        for red in (HiddenRedistributor(), RawRedistributor()):
            learner = QLearner(25, 4, cfg.total_steps, gamma=0.9, batch_size=16)
            log = rlbr_loop(env, red, learner, cfg, {"kind": "fixed", "length": 1}, seed=3)
            path = tmp_path / f"{type(red).__name__}.csv"
            log.write_csv(path)
            logs.append((path.read_bytes(), learner.table.values.copy()))
        assert logs[0][0] == logs[1][0]
        assert np.array_equal(logs[0][1], logs[1][1])

    def test_deterministic(self, tmp_path):
        env = el.gridworld_5x5(30)
        out = []
        for k in range(2):
            red = make_redistributor("rbt", 25, 4, RBTConfig.desk(seq_len=5, relabel_len=5, batch_size=4), seed=1)
            log = rlbr_loop(env, red, QLearner(25, 4, 600, batch_size=16), small_loop(), {"kind": "fixed", "length": 5},
                            seed=1)
            log.write_csv(tmp_path / f"{k}.csv")
            out.append((tmp_path / f"{k}.csv").read_bytes())
        assert out[0] == out[1]
        rows = read_log(tmp_path / "0.csv")
        assert [r["step"] for r in rows] == [200, 400, 600]

    def test_log_columns_and_final_eval(self, tmp_path):
        env = el.gridworld_5x5(30)
        cfg = small_loop(total_steps=450)
        log = rlbr_loop(env, RawRedistributor(), QLearner(25, 4, 450, batch_size=16), cfg,
                        {"kind": "fixed", "length": 5}, seed=0)
        assert [r.step for r in log.rows] == [200, 400, 450]
        log.write_csv(tmp_path / "log.csv")
        header = (tmp_path / "log.csv").read_text().splitlines()[0]
        assert header == "step,eval_return_mean,eval_return_std,rbt_loss,reward_residual"

    def test_rbt_rounds_recorded(self):
        env = el.gridworld_5x5(30)
        cfg = small_loop(round_min_steps=100, max_iters_per_round=2)
        red = make_redistributor("rbt", 25, 4, RBTConfig.desk(seq_len=5, relabel_len=5, batch_size=4), seed=0)
        log = rlbr_loop(env, red, QLearner(25, 4, 600, batch_size=16), cfg, {"kind": "fixed", "length": 5})
        assert log.rbt_rounds[0][0] >= 100  # pretraining waits for enough stored steps
        assert len(log.rbt_rounds) > 1
        assert all(n <= 2 for _, n in log.rbt_rounds)
        assert np.isfinite(log.rows[-1].reward_residual)

    def test_env_learner_mismatch(self):
        with pytest.raises(TypeError):
            check_compatible(el.point_mass_env(10), QLearner(2, 2, 10))
        with pytest.raises(TypeError):
            rlbr_loop(el.gridworld_5x5(10), RawRedistributor(), SacLite(25, 4), small_loop(),
                      {"kind": "fixed", "length": 1})

    def test_sac_runs_on_point_mass(self):
        env = el.point_mass_env(20)
        cfg = small_loop(total_steps=80, eval_interval=40, pretrain_steps=0, batch_size=8)
        log = rlbr_loop(env, IRCRRedistributor(), SacLite(4, 2, SacConfig(hidden=8), seed=0), cfg,
                        {"kind": "fixed", "length": 5})
        assert len(log.rows) == 2 and np.isfinite(log.final_return)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LoopConfig(total_steps=0)
        with pytest.raises(ValueError):
            LoopConfig(pretrain_iters=-1)


def test_evaluate_optimal_policy_hits_value_iteration_optimum():
    env = el.gridworld_5x5(200)
    vi = oracle.value_iteration(env.mdp)
    learner = QLearner(25, 4, 10)
    learner.table.values[:] = vi.q[0]
    mean, std = evaluate(learner, env, 3, np.random.default_rng(0))
    assert mean == pytest.approx(vi.optimal_value, abs=1e-12)
    assert vi.optimal_value == pytest.approx(0.93)
    assert std <= 1e-12
