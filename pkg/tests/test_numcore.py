import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlbr import numcore as nc
from rlbr.numcore import Tape, Tensor, backward


def triple_loop_matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += a[i, p] * b[p, j]
            out[i, j] = s
    return out


def param(rng, *shape):
    return Tensor(rng.uniform(-1, 1, size=shape), requires_grad=True)


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = nc.matmul(Tensor(np.eye(2)), Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_hand_arithmetic(self):
        out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose((Tensor(a) @ Tensor(b)).data, triple_loop_matmul(a, b), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(nc.ShapeError):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(nc.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)

    def test_no_overflow(self):
        y = nc.softmax(Tensor([1000.0, 0.0])).data
        np.testing.assert_allclose(y, [1.0, 0.0], atol=1e-12)

    def test_formula_oracle(self):
        x = np.random.default_rng(1).normal(size=7)
        oracle = np.exp(x) / np.exp(x).sum()
        np.testing.assert_allclose(nc.softmax(Tensor(x)).data, oracle, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.randoms(use_true_random=False))
    def test_rows_sum_to_one_and_permutation_equivariant(self, xs, rnd):
        x = np.array(xs)
        y = nc.softmax(Tensor(x)).data
        assert abs(y.sum() - 1.0) <= 1e-12
        perm = list(range(len(xs)))
        rnd.shuffle(perm)
        np.testing.assert_allclose(nc.softmax(Tensor(x[perm])).data, y[perm], atol=1e-15)

    def test_entries_strictly_inside_unit_interval(self):
        y = nc.softmax(Tensor(np.random.default_rng(2).uniform(-3, 3, size=(4, 5))), axis=-1).data
        assert np.all((y > 0) & (y < 1))
        np.testing.assert_allclose(y.sum(-1), 1.0, atol=1e-12)


class TestBackward:
    def test_sum_gives_ones(self):
        p = param(np.random.default_rng(0), 3, 2)
        with Tape() as tape:
            loss = p.sum()
        g = backward(tape, loss)
        np.testing.assert_array_equal(g[p], np.ones((3, 2)))

    def test_squared_norm_gives_2p(self):
        p = param(np.random.default_rng(0), 5)
        with Tape() as tape:
            loss = (p * p).sum()
        np.testing.assert_allclose(backward(tape, loss)[p], 2 * p.data)

    def test_non_scalar_loss_rejected(self):
        p = param(np.random.default_rng(0), 2)
        with Tape() as tape:
            y = p * 2.0
        with pytest.raises(nc.ShapeError):
            backward(tape, y)

    def test_shared_input_accumulates(self):
        p = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            loss = (p * p + p * 4.0).sum()
        np.testing.assert_allclose(backward(tape, loss)[p], [10.0])

    def test_nonfinite_rejected(self):
        with pytest.raises(nc.NonFiniteError):
            Tensor([1.0, np.nan])
        with pytest.raises(nc.NonFiniteError):
            nc.exp(Tensor([1000.0]))

    def test_no_tape_no_record(self):
        p = Tensor([1.0], requires_grad=True)
        y = p * 2.0
        assert y.grad_id is None and not y.requires_grad


def _check_op(build, *shapes, seed=0, positive=False):
    rng = np.random.default_rng(seed)
    params = [param(rng, *s) for s in shapes]
    if positive:
        for p in params:
            p.data = np.abs(p.data) + 0.5
    weights = rng.normal(size=build(*params).shape)

    def loss_value():
        return float((build(*params).data * weights).sum())

    with Tape() as tape:
        loss = (build(*params) * Tensor(weights)).sum()
    grads = backward(tape, loss)
    analytic = [grads[p] for p in params]
    numeric = nc.numerical_grad(loss_value, params, h=1e-5)
    return nc.relative_error(analytic, numeric)


OP_CASES = {
    "add_bias": (lambda a, b: a + b, [(3, 4), (4,)]),
    "sub": (lambda a, b: a - b, [(3, 4), (3, 4)]),
    "mul_broadcast": (lambda a, b: a * b, [(2, 3, 4), (3, 1)]),
    "matmul_2d": (lambda a, b: a @ b, [(3, 4), (4, 2)]),
    "matmul_batched_weight": (lambda a, b: a @ b, [(2, 3, 4), (4, 5)]),
    "matmul_batched": (lambda a, b: a @ b, [(2, 3, 4), (2, 4, 3)]),
    "sum_axis": (lambda a: a.sum(axis=1), [(3, 4)]),
    "mean_keep": (lambda a: a.mean(axis=-1, keepdims=True), [(2, 3, 4)]),
    "reshape": (lambda a: a.reshape(4, 3), [(3, 4)]),
    "transpose": (lambda a: a.transpose(1, 0, 2), [(2, 3, 4)]),
    "swap_last": (lambda a: a.T, [(2, 3, 4)]),
    "getitem_stride": (lambda a: a[:, 1::2], [(3, 6)]),
    "getitem_fancy": (lambda a: a[np.array([0, 2, 0])], [(3, 2)]),
    "take_rows": (lambda a: nc.take_rows(a, np.array([[0, 1], [1, 1]])), [(3, 2)]),
    "concat": (lambda a, b: nc.concat([a, b], axis=-1), [(2, 3), (2, 2)]),
    "stack": (lambda a, b: nc.stack([a, b], axis=1), [(2, 3), (2, 3)]),
    "exp": (nc.exp, [(3, 3)]),
    "tanh": (nc.tanh, [(3, 3)]),
    "gelu": (nc.gelu, [(3, 3)]),
    "square": (nc.square, [(3, 3)]),
    "softmax": (lambda a: nc.softmax(a, axis=-1), [(3, 5)]),
    "softmax_masked": (lambda a: nc.softmax(a, axis=-1, mask=np.tril(np.ones((4, 4), bool))), [(4, 4)]),
    "layer_norm": (lambda x, g, b: nc.layer_norm(x, g, b), [(3, 6), (6,), (6,)]),
    "minimum": (lambda a, b: nc.minimum(a, b), [(4, 3), (4, 3)]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    build, shapes = OP_CASES[name]
    for seed in range(3):
        assert _check_op(build, *shapes, seed=seed) <= 1e-4, name


def test_log_gradient():
    assert _check_op(nc.log, (3, 3), positive=True) <= 1e-4


def test_relu_and_clip_gradients_away_from_kinks():
    rng = np.random.default_rng(5)
    x = Tensor(rng.choice([-1, 1], size=(4, 4)) * rng.uniform(0.2, 1.0, size=(4, 4)), requires_grad=True)
    with Tape() as tape:
        loss = (nc.relu(x) + nc.clip(x, -0.5, 0.5)).sum()
    g = backward(tape, loss)[x]
    expected = (x.data > 0).astype(float) + (np.abs(x.data) <= 0.5)
    np.testing.assert_array_equal(g, expected)


class TestLayerNorm:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 16))
    def test_moments(self, seed, width):
        x = np.random.default_rng(seed).normal(0, 3, size=(5, width))
        # eps=1e-10 inside the sqrt; rows need spread well above it
        x = x[x.var(-1) > 1e-2]
        if not len(x):
            return
        y = nc.layer_norm(Tensor(x)).data
        assert np.abs(y.mean(-1)).max() <= 1e-10
        np.testing.assert_allclose(y.var(-1), 1.0, atol=1e-8)


class TestDropout:
    def test_disabled_is_bit_identical(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
        a = nc.dropout(x, 0.1, np.random.default_rng(1), training=False).data
        b = nc.dropout(x, 0.1, np.random.default_rng(2), training=False).data
        assert np.array_equal(a, b) and np.array_equal(a, x.data)

    def test_seeded_masks_repeat(self):
        x = Tensor(np.ones((50, 50)))
        a = nc.dropout(x, 0.1, np.random.default_rng(7), training=True).data
        b = nc.dropout(x, 0.1, np.random.default_rng(7), training=True).data
        assert np.array_equal(a, b)
        kept = a != 0
        assert 0.85 < kept.mean() < 0.95
        np.testing.assert_allclose(a[kept], 1 / 0.9)


class TestAdamW:
    def test_warmup_start_no_change(self):
        p = Tensor([1.0, -2.0], requires_grad=True)
        state = nc.OptimState(lr=1e-4, weight_decay=1e-4, warmup_steps=100)
        assert nc.effective_lr(state) == 0.0
        nc.adamw_step([p], [np.array([5.0, 5.0])], state)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert state.step == 1

    def test_warmup_end_reaches_lr(self):
        state = nc.OptimState(lr=1e-4, warmup_steps=100, step=100)
        assert nc.effective_lr(state) == 1e-4
        state.step = 50
        assert nc.effective_lr(state) == pytest.approx(5e-5)
        state.step = 1000
        assert nc.effective_lr(state) == 1e-4

    def test_cosine_decay(self):
        state = nc.OptimState(lr=1e-3, warmup_steps=100, decay_steps=300, step=100)
        assert nc.effective_lr(state) == 1e-3
        state.step = 200
        assert nc.effective_lr(state) == pytest.approx(5e-4)
        state.step = 300
        assert nc.effective_lr(state) == pytest.approx(0.0, abs=1e-18)
        state.step = 5000
        assert nc.effective_lr(state) == pytest.approx(0.0, abs=1e-18)
        state.step = 50
        assert nc.effective_lr(state) == pytest.approx(5e-4)

    def test_hand_unrolled_three_steps(self):
        lr, wd, b1, b2, eps, g = 0.1, 0.01, 0.9, 0.999, 1e-8, 0.5
        p = Tensor([2.0], requires_grad=True)
        state = nc.OptimState(lr=lr, weight_decay=wd, warmup_steps=0, beta1=b1, beta2=b2, eps=eps)
        x, m, v = 2.0, 0.0, 0.0
        for t in (1, 2, 3):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat, vhat = m / (1 - b1**t), v / (1 - b2**t)
            x = x * (1 - lr * wd) - lr * mhat / (vhat**0.5 + eps)
            nc.adamw_step([p], [np.array([g])], state)
            assert p.data[0] == pytest.approx(x, abs=1e-15)

    def test_shape_mismatch(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(nc.ShapeError):
            nc.adamw_step([p], [np.zeros(2)], nc.OptimState())

    def test_clip_grad_norm(self):
        grads, norm = nc.clip_grad_norm([np.array([3.0]), np.array([4.0])], 1.0)
        assert norm == 5.0
        np.testing.assert_allclose(np.concatenate(grads), [0.6, 0.8])
