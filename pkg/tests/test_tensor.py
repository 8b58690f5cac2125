"""Tests for the reverse-mode tensor core.

Forward values are checked against plain numpy; gradients against
central finite differences on randomized inputs.
"""

import numpy as np
import pytest

from costream.errors import ContractError, DimensionError
from costream.tensor import (Tensor, add, add_rowvec, backward, concat, constant,
                             exp, first_non_finite, log, matmul, maximum, mul,
                             reduce_max, reduce_mean, reduce_sum, relu, reshape,
                             row_normalize, row_softmax, scale, shift,
                             squared_distance, sub, take, take_per_row, transpose)


def leaf(rng, shape, low=-1.0, high=1.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def numeric_grads(build, leaves, eps=1e-6):
    """Central-difference gradients of the scalar build() w.r.t. each leaf."""
    out = {}
    for name, p in leaves.items():
        g = np.zeros(p.data.size)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = float(build().data)
            flat[i] = keep - eps
            lo = float(build().data)
            flat[i] = keep
            g[i] = (hi - lo) / (2.0 * eps)
        out[name] = g.reshape(p.data.shape)
    return out


def check_grads(build, leaves, atol=1e-7):
    for p in leaves.values():
        p.zero_grad()
    loss = build()
    backward(loss)
    expected = numeric_grads(build, leaves)
    for name, p in leaves.items():
        assert p.grad is not None, name
        np.testing.assert_allclose(p.grad, expected[name], atol=atol, err_msg=name)


# ---------------------------------------------------------------- forward


def test_forward_values_match_numpy():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, size=(3, 4))
    b = rng.uniform(-1, 1, size=(4, 5))
    c = rng.uniform(-1, 1, size=(3, 4))
    v = rng.uniform(-1, 1, size=4)

    ta, tb, tc, tv = Tensor(a), Tensor(b), Tensor(c), Tensor(v)
    # matmul may run on the compiled kernel, whose summation order differs
    # from BLAS by an ulp or two
    np.testing.assert_allclose(matmul(ta, tb).data, a @ b, rtol=1e-13, atol=1e-15)
    np.testing.assert_array_equal(transpose(ta).data, a.T)
    np.testing.assert_array_equal(add(ta, tc).data, a + c)
    np.testing.assert_array_equal(sub(ta, tc).data, a - c)
    np.testing.assert_array_equal(mul(ta, tc).data, a * c)
    np.testing.assert_array_equal(maximum(ta, tc).data, np.maximum(a, c))
    np.testing.assert_array_equal(scale(ta, 2.5).data, 2.5 * a)
    np.testing.assert_array_equal(shift(ta, -1.5).data, a - 1.5)
    np.testing.assert_array_equal(add_rowvec(ta, tv).data, a + v)
    np.testing.assert_array_equal(relu(ta).data, np.maximum(a, 0.0))
    np.testing.assert_allclose(exp(ta).data, np.exp(a), rtol=1e-15)
    np.testing.assert_allclose(log(Tensor(np.abs(a) + 0.5)).data,
                               np.log(np.abs(a) + 0.5), rtol=1e-15)
    np.testing.assert_array_equal(reshape(ta, (4, 3)).data, a.reshape(4, 3))
    np.testing.assert_array_equal(concat([ta, tc], axis=0).data,
                                  np.concatenate([a, c], axis=0))
    np.testing.assert_array_equal(take(ta, 1).data, a[1])
    np.testing.assert_array_equal(take(ta, [2, 0]).data, a[[2, 0]])


def test_reductions_match_numpy():
    rng = np.random.default_rng(1)
    a = rng.uniform(-1, 1, size=(4, 6))
    ta = Tensor(a)
    assert float(reduce_sum(ta).data) == pytest.approx(a.sum(), rel=1e-15)
    assert float(reduce_mean(ta).data) == pytest.approx(a.mean(), rel=1e-15)
    assert float(reduce_max(ta).data) == a.max()
    np.testing.assert_allclose(reduce_sum(ta, axis=0).data, a.sum(axis=0), rtol=1e-15)
    np.testing.assert_allclose(reduce_mean(ta, axis=1).data, a.mean(axis=1), rtol=1e-15)
    np.testing.assert_array_equal(reduce_max(ta, axis=0).data, a.max(axis=0))


def test_row_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    a = Tensor(rng.normal(size=(5, 7)))
    s = row_softmax(a).data
    assert (s > 0).all()
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    manual = np.exp(a.data) / np.exp(a.data).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(s, manual, rtol=1e-12)


def test_row_normalize_rows_sum_to_one():
    rng = np.random.default_rng(3)
    a = Tensor(rng.uniform(0.1, 2.0, size=(4, 6)))
    s = row_normalize(a).data
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(s, a.data / a.data.sum(axis=1, keepdims=True), rtol=1e-12)


def test_take_per_row_picks_one_entry_per_row():
    a = Tensor(np.arange(12.0).reshape(3, 4))
    idx = np.array([1, 3, 0])
    np.testing.assert_array_equal(take_per_row(a, idx).data, [1.0, 7.0, 8.0])


def test_squared_distance_matches_numpy():
    rng = np.random.default_rng(4)
    a = rng.normal(size=5)
    b = rng.normal(size=5)
    got = float(squared_distance(Tensor(a), Tensor(b)).data)
    assert got == pytest.approx(((a - b) ** 2).sum(), rel=1e-14)


# --------------------------------------------------------------- backward


def test_gradients_of_elementwise_and_matmul_ops():
    rng = np.random.default_rng(10)
    leaves = {"a": leaf(rng, (3, 4)), "b": leaf(rng, (4, 3)), "c": leaf(rng, (3, 4))}

    def build():
        prod = matmul(leaves["a"], leaves["b"])        # 3x3
        mixed = add(prod, transpose(matmul(leaves["c"], leaves["b"])))
        return reduce_sum(mul(mixed, mixed))

    check_grads(build, leaves)


def test_gradients_of_nonlinearities():
    rng = np.random.default_rng(11)
    # keep magnitudes comfortably away from the relu and max kinks
    leaves = {"x": Tensor(rng.uniform(0.2, 1.5, size=(4, 5)) *
                          rng.choice([-1.0, 1.0], size=(4, 5)), requires_grad=True)}

    def build():
        x = leaves["x"]
        pos = relu(x)
        smooth = log(shift(exp(scale(x, 0.5)), 2.0))
        return add(reduce_sum(mul(pos, pos)), reduce_mean(smooth))

    check_grads(build, leaves)


def test_gradients_of_softmax_normalize_and_reductions():
    rng = np.random.default_rng(12)
    leaves = {"x": leaf(rng, (4, 5)), "y": Tensor(rng.uniform(0.5, 2.0, size=(4, 5)),
                                                  requires_grad=True)}

    def build():
        s = row_softmax(leaves["x"])
        n = row_normalize(leaves["y"])
        return add(reduce_sum(mul(s, n)), reduce_mean(s, axis=None))

    check_grads(build, leaves)


def test_gradients_of_reduce_max_away_from_ties():
    rng = np.random.default_rng(13)
    base = rng.permutation(20).astype(np.float64).reshape(4, 5)  # unique entries
    leaves = {"x": Tensor(base, requires_grad=True)}

    def build():
        return add(reduce_max(leaves["x"]),
                   reduce_sum(reduce_max(leaves["x"], axis=0)))

    check_grads(build, leaves)


def test_gradients_of_shape_and_indexing_ops():
    rng = np.random.default_rng(14)
    leaves = {"x": leaf(rng, (4, 6)), "v": leaf(rng, (6,))}
    idx = np.array([2, 0, 5, 1])

    def build():
        x = leaves["x"]
        r = reshape(x, (2, 12))
        stacked = concat([x, x], axis=0)
        picked = take(stacked, [1, 3, 6])
        per_row = take_per_row(x, idx)
        return (reduce_sum(mul(r, r)) + reduce_sum(add_rowvec(picked, leaves["v"]))
                + reduce_sum(mul(per_row, per_row)))

    check_grads(build, leaves)


def test_gradient_of_squared_distance():
    rng = np.random.default_rng(15)
    leaves = {"a": leaf(rng, (5,)), "b": leaf(rng, (5,))}

    def build():
        return squared_distance(leaves["a"], leaves["b"])

    check_grads(build, leaves)


def test_gradients_of_maximum_and_sub():
    rng = np.random.default_rng(16)
    a = rng.uniform(-1, 1, size=(3, 3))
    b = a + rng.choice([-0.5, 0.5], size=(3, 3))  # no ties
    leaves = {"a": Tensor(a, requires_grad=True), "b": Tensor(b, requires_grad=True)}

    def build():
        return reduce_sum(mul(maximum(leaves["a"], leaves["b"]),
                              sub(leaves["a"], leaves["b"])))

    check_grads(build, leaves)


def test_backward_accumulates_until_zero_grad():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    loss = reduce_sum(mul(x, x))
    backward(loss)
    first = x.grad.copy()
    backward(reduce_sum(mul(x, x)))
    np.testing.assert_array_equal(x.grad, 2.0 * first)
    x.zero_grad()
    assert x.grad is None


def test_shared_subexpression_contributes_twice():
    x = Tensor(np.array([3.0]), requires_grad=True)
    y = mul(x, x)
    loss = reduce_sum(add(y, y))  # d/dx of 2x^2 at 3 is 12
    backward(loss)
    np.testing.assert_allclose(x.grad, [12.0])


def test_constants_and_detached_stay_out_of_the_graph():
    x = Tensor(np.array([2.0]), requires_grad=True)
    frozen = x.detached()
    assert not frozen.requires_grad
    c = constant(np.array([5.0]))
    loss = reduce_sum(mul(add(frozen, c), add(frozen, c)))
    with pytest.raises(ContractError):
        backward(loss)
    assert x.grad is None


def test_operator_sugar_builds_the_same_graph():
    rng = np.random.default_rng(17)
    a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    combined = (a @ b) * 2.0 + 1.0
    np.testing.assert_allclose(combined.data, 2.0 * (a.data @ b.data) + 1.0)
    backward(reduce_sum(-combined))
    assert a.grad is not None and b.grad is not None
    np.testing.assert_array_equal(a[0].data, a.data[0])


def test_backward_rejects_non_scalar_roots():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        backward(add(x, x))


def test_item_needs_a_single_value():
    with pytest.raises(ContractError):
        Tensor(np.ones(3)).item()
    assert Tensor(np.array(2.0)).item() == 2.0


def test_dimension_guards():
    a = Tensor(np.ones((2, 3)))
    b = Tensor(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        matmul(a, b)  # inner dims disagree
    with pytest.raises(DimensionError):
        add(a, Tensor(np.ones((3, 2))))
    with pytest.raises(DimensionError):
        add_rowvec(a, Tensor(np.ones(2)))
    with pytest.raises(DimensionError):
        reshape(a, (4, 2))
    with pytest.raises(DimensionError):
        take_per_row(a, np.array([0]))
    with pytest.raises(ContractError):
        take_per_row(a, np.array([0, 3]))
    with pytest.raises(ContractError):
        concat([], axis=0)


def test_first_non_finite_reports_the_earliest_bad_node():
    x = Tensor(np.array([800.0, 900.0]))
    with np.errstate(over="ignore"):
        blown = exp(x)  # overflows to inf
        root = reduce_sum(mul(blown, blown))
    bad = first_non_finite(root)
    assert bad is not None
    assert bad.op == "exp"

    ok = reduce_sum(mul(x, x))
    assert first_non_finite(ok) is None
