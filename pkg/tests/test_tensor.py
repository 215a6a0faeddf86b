"""Autodiff core: forward values, backward correctness vs central differences."""

import math

import numpy as np
import pytest

from dualmotion import tensor as T


def test_softmax_symmetry():
    out = T.softmax(T.Tensor([0.0, 0.0]))
    np.testing.assert_allclose(out.data, [0.5, 0.5], rtol=0, atol=0)


def test_bce_at_half():
    out = T.binary_cross_entropy(T.Tensor([0.5]), [1.0])
    assert abs(out.data[0] - math.log(2)) < 1e-12


def test_matmul_identity():
    a = T.Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = T.matmul(a, T.Tensor(np.eye(2)))
    np.testing.assert_array_equal(out.data, a.data)


def test_product_rule():
    x = T.Tensor(2.0, requires_grad=True)
    y = T.Tensor(3.0, requires_grad=True)
    T.backward(T.mul(x, y))
    assert x.grad == 3.0 and y.grad == 2.0


def test_softmax_sum_has_zero_grad():
    v = T.Tensor([0.3, -1.2, 2.0], requires_grad=True)
    T.backward(T.sum_(T.softmax(v)))
    np.testing.assert_allclose(v.grad, np.zeros(3), atol=1e-15)


def test_matmul_tanh_sum_chain_matches_fd():
    rng = np.random.default_rng(7)
    w = T.Tensor(rng.uniform(-1, 1, (3, 3)))

    def f(x):
        return T.sum_(T.tanh(T.matmul(x, w)))

    err = T.finite_diff_check(f, T.Tensor(rng.uniform(-1, 1, (3, 3))), step=1e-5)
    assert err < 1e-4


def test_fd_check_squared_l2():
    point = T.Tensor([3.0, 4.0])
    err = T.finite_diff_check(T.squared_l2, point, step=1e-5)
    assert err < 1e-6
    x = T.Tensor([3.0, 4.0], requires_grad=True)
    T.backward(T.squared_l2(x))
    np.testing.assert_allclose(x.grad, [6.0, 8.0], atol=1e-12)


def test_fd_check_sigmoid_at_zero():
    x = T.Tensor([0.0], requires_grad=True)
    T.backward(T.sum_(T.sigmoid(x)))
    assert abs(x.grad[0] - 0.25) < 1e-12
    err = T.finite_diff_check(lambda t: T.sum_(T.sigmoid(t)), T.Tensor([0.0]), step=1e-5)
    assert err < 1e-6


def _away_from_kinks(x, margin=1e-3):
    x = x.copy()
    x[np.abs(x) < margin] += 2 * margin
    return x


# central differences are unreliable exactly at relu kinks and bce clamps,
# so the sampled points keep a margin from them
OPS = [
    ("add", 2, lambda a, b: T.sum_(T.add(a, b))),
    ("sub", 2, lambda a, b: T.sum_(T.sub(a, b))),
    ("mul", 2, lambda a, b: T.sum_(T.mul(a, b))),
    ("matmul", 2, lambda a, b: T.sum_(T.matmul(a, b))),
    ("concat", 2, lambda a, b: T.sum_(T.tanh(T.concat([a, b])))),
    ("slice", 1, lambda a: T.sum_(T.exp(T.slice_(a, 1, 3)))),
    ("sum", 1, lambda a: T.mul(T.sum_(a), T.sum_(a))),
    ("mean", 1, lambda a: T.squared_l2(T.mean(a, axis=0))),
    ("exp", 1, lambda a: T.sum_(T.exp(a))),
    ("tanh", 1, lambda a: T.sum_(T.tanh(a))),
    ("sigmoid", 1, lambda a: T.sum_(T.sigmoid(a))),
    ("relu", 1, lambda a: T.sum_(T.relu(a))),
    ("softmax", 1, lambda a: T.squared_l2(T.softmax(a))),
    ("squared_l2", 1, lambda a: T.squared_l2(a)),
    ("softplus", 1, lambda a: T.sum_(T.softplus(a))),
    ("stack", 2, lambda a, b: T.sum_(T.tanh(T.stack([a, b])))),
    ("reshape", 1, lambda a: T.sum_(T.tanh(T.reshape(a, (2, 2))))),
]


@pytest.mark.parametrize("name,arity,f", OPS, ids=[o[0] for o in OPS])
def test_op_gradients_match_fd(name, arity, f):
    rng = np.random.default_rng(hash(name) % 2**32)
    trials = 0
    while trials < 100:
        x = _away_from_kinks(rng.uniform(-2, 2, 4))
        if arity == 2:
            y = T.Tensor(_away_from_kinks(rng.uniform(-2, 2, 4)))
            err = T.finite_diff_check(lambda t: f(t, y), T.Tensor(x), step=1e-5)
        else:
            err = T.finite_diff_check(f, T.Tensor(x), step=1e-5)
        assert err < 1e-4, f"{name}: fd mismatch {err}"
        trials += 1


def test_sqrt_gradient_matches_fd():
    rng = np.random.default_rng(3)
    for _ in range(100):
        x = rng.uniform(0.1, 2, 4)
        err = T.finite_diff_check(lambda t: T.sum_(T.sqrt(t)), T.Tensor(x), step=1e-6)
        assert err < 1e-4


def test_bce_gradient_matches_fd():
    rng = np.random.default_rng(4)
    for _ in range(100):
        p = rng.uniform(0.05, 0.95, 4)
        y = rng.integers(0, 2, 4).astype(float)
        err = T.finite_diff_check(
            lambda t: T.sum_(T.binary_cross_entropy(T.sigmoid(t), y)),
            T.Tensor(np.log(p / (1 - p))), step=1e-5)
        assert err < 1e-4


def test_broadcast_gradients_match_fd():
    rng = np.random.default_rng(5)
    m = T.Tensor(rng.uniform(-1, 1, (3, 4)))

    def f(v):  # (4,) broadcast against (3,4)
        return T.squared_l2(T.mul(T.sub(m, v), T.add(m, v)))

    err = T.finite_diff_check(f, T.Tensor(rng.uniform(-1, 1, 4)), step=1e-5)
    assert err < 1e-4
    # scalar broadcast against a vector
    base = T.constant(rng.uniform(-1, 1, 5))
    err = T.finite_diff_check(
        lambda s: T.sum_(T.tanh(T.add(base, s))), T.Tensor(0.3), step=1e-5)
    assert err < 1e-4


def test_matmul_vector_cases():
    rng = np.random.default_rng(6)
    a = rng.uniform(-1, 1, (3, 4))
    v = rng.uniform(-1, 1, 4)
    u = rng.uniform(-1, 1, 3)
    np.testing.assert_allclose(T.matmul(T.Tensor(a), T.Tensor(v)).data, a @ v)
    np.testing.assert_allclose(T.matmul(T.Tensor(u), T.Tensor(a)).data, u @ a)
    np.testing.assert_allclose(T.matmul(T.Tensor(v), T.Tensor(v)).data, v @ v)
    err = T.finite_diff_check(lambda t: T.sum_(T.matmul(T.Tensor(a), t)), T.Tensor(v))
    assert err < 1e-4
    err = T.finite_diff_check(lambda t: T.sum_(T.matmul(t, T.Tensor(a))), T.Tensor(u))
    assert err < 1e-4
    err = T.finite_diff_check(lambda t: T.matmul(t, T.Tensor(v)), T.Tensor(v))
    assert err < 1e-4


def test_softmax_normalized_and_nonnegative():
    rng = np.random.default_rng(8)
    for _ in range(200):
        x = rng.uniform(-10, 10, rng.integers(1, 9))
        out = T.softmax(T.Tensor(x)).data
        assert (out >= 0).all()
        assert abs(out.sum() - 1.0) <= 1e-12


def test_backward_leaves_forward_values_unchanged():
    rng = np.random.default_rng(9)
    x = T.Tensor(rng.uniform(-1, 1, (3, 3)), requires_grad=True)
    y = T.tanh(T.matmul(x, x))
    z = T.sum_(y)
    before = (x.data.copy(), y.data.copy(), z.data.copy())
    T.backward(z)
    np.testing.assert_array_equal(x.data, before[0])
    np.testing.assert_array_equal(y.data, before[1])
    np.testing.assert_array_equal(z.data, before[2])


def test_tape_topological_order():
    x = T.Tensor(1.0, requires_grad=True)
    y = T.add(x, T.Tensor(2.0))
    z = T.mul(y, y)
    w = T.add(z, y)
    tape = T.Tape.from_root(w)
    pos = {id(t): i for i, t in enumerate(tape.nodes)}
    assert len(pos) == len(tape.nodes)  # each node exactly once
    for t in tape.nodes:
        for u in t._inputs:
            assert pos[id(u)] < pos[id(t)]


def test_grad_accumulates_across_backward_calls():
    x = T.Tensor(2.0, requires_grad=True)
    T.backward(T.mul(x, x))
    T.backward(T.mul(x, x))
    assert x.grad == 8.0
    x.zero_grad()
    assert x.grad is None


def test_shape_mismatch_errors_name_op_and_shapes():
    with pytest.raises(T.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))
    with pytest.raises(T.ShapeError, match="add"):
        T.add(T.Tensor(np.ones(3)), T.Tensor(np.ones(4)))
    with pytest.raises(T.ShapeError, match="stack"):
        T.stack([T.Tensor(np.ones(3)), T.Tensor(np.ones(4))])


def test_non_finite_input_rejected():
    with pytest.raises(ValueError, match="non-finite"):
        T.tanh(T.Tensor([np.nan]))
    with pytest.raises(ValueError, match="non-finite"):
        T.mul(T.Tensor([np.inf]), T.Tensor([1.0]))


def test_backward_requires_scalar_root():
    x = T.Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(T.ShapeError, match="scalar"):
        T.backward(T.tanh(x))


def test_no_grad_suppresses_recording():
    x = T.Tensor([1.0, 2.0], requires_grad=True)
    with T.no_grad():
        y = T.sum_(T.tanh(x))
    assert not y.requires_grad
    T.backward(y)  # no-op
    assert x.grad is None


def test_fd_check_rejects_bad_inputs():
    with pytest.raises(ValueError, match="step"):
        T.finite_diff_check(T.squared_l2, T.Tensor([1.0]), step=0.0)
    with pytest.raises(T.ShapeError, match="scalar"):
        T.finite_diff_check(lambda t: T.tanh(t), T.Tensor([1.0, 2.0]))


def test_getitem_row_and_slice():
    m = T.Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    row = m[1]
    assert row.shape == (3,)
    np.testing.assert_array_equal(row.data, [3.0, 4.0, 5.0])
    sub = m[1:3]
    assert sub.shape == (2, 3)
    T.backward(T.sum_(T.mul(sub, sub)))
    expected = np.zeros((4, 3))
    expected[1:3] = 2 * m.data[1:3]
    np.testing.assert_allclose(m.grad, expected)
