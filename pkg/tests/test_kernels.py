"""Backend parity tests: the compiled and numpy kernels must agree."""

import numpy as np
import pytest

from costream import kernels
from costream.kernels import _numpy as pyk

try:
    from costream.kernels import _compiled as ck
except ImportError:
    ck = None

needs_compiled = pytest.mark.skipif(ck is None, reason="compiled kernels not built")


def test_backend_name_is_one_of_the_two():
    assert kernels.BACKEND in ("compiled", "python")


def test_python_matmul_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(7, 5))
    b = rng.normal(size=(5, 9))
    np.testing.assert_allclose(pyk.matmul(a, b), a @ b, rtol=1e-13)
    np.testing.assert_allclose(pyk.matmul(a.T, b, trans_a=True), a @ b, rtol=1e-13)
    np.testing.assert_allclose(pyk.matmul(a, b.T, trans_b=True), a @ b, rtol=1e-13)
    np.testing.assert_allclose(pyk.matmul(a.T, b.T, trans_a=True, trans_b=True),
                               a @ b, rtol=1e-13)


def test_python_row_softmax_is_shift_invariant_and_stochastic():
    rng = np.random.default_rng(1)
    x = rng.normal(scale=3.0, size=(6, 8))
    s = pyk.row_softmax(x)
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(pyk.row_softmax(x + 100.0), s, atol=1e-12)
    # stays finite at magnitudes where a naive exp overflows
    assert np.isfinite(pyk.row_softmax(x * 500.0)).all()


def test_python_row_softmax_grad_matches_finite_differences():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 5))
    upstream = rng.normal(size=(3, 5))
    got = pyk.row_softmax_grad(pyk.row_softmax(x), upstream)
    eps = 1e-6
    want = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            bumped = x.copy()
            bumped[i, j] += eps
            hi = (pyk.row_softmax(bumped) * upstream).sum()
            bumped[i, j] -= 2 * eps
            lo = (pyk.row_softmax(bumped) * upstream).sum()
            want[i, j] = (hi - lo) / (2 * eps)
    np.testing.assert_allclose(got, want, atol=1e-8)


def test_python_pairwise_sqdist_matches_direct_formula():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(6, 4))
    b = rng.normal(size=(5, 4))
    want = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    np.testing.assert_allclose(pyk.pairwise_sqdist(a, b), want, atol=1e-12)
    assert (pyk.pairwise_sqdist(a, a) >= 0).all()


@needs_compiled
def test_compiled_matmul_agrees_with_python():
    rng = np.random.default_rng(4)
    for _ in range(10):
        m, k, n = rng.integers(1, 24, size=3)
        a = rng.normal(size=(m, k))
        b = rng.normal(size=(k, n))
        np.testing.assert_allclose(ck.matmul(a, b), pyk.matmul(a, b), rtol=1e-12,
                                   atol=1e-12)
        np.testing.assert_allclose(ck.matmul(a.T, b, trans_a=True), a @ b,
                                   rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(ck.matmul(a, b.T, trans_b=True), a @ b,
                                   rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(ck.matmul(a.T, b.T, trans_a=True, trans_b=True),
                                   a @ b, rtol=1e-12, atol=1e-12)


@needs_compiled
def test_compiled_row_softmax_agrees_with_python():
    rng = np.random.default_rng(5)
    for _ in range(10):
        r, c = rng.integers(1, 20, size=2)
        x = rng.normal(scale=rng.uniform(0.1, 50.0), size=(r, c))
        np.testing.assert_allclose(ck.row_softmax(x), pyk.row_softmax(x), atol=1e-14)


@needs_compiled
def test_compiled_row_softmax_grad_agrees_with_python():
    rng = np.random.default_rng(6)
    for _ in range(10):
        r, c = rng.integers(1, 16, size=2)
        s = pyk.row_softmax(rng.normal(size=(r, c)))
        up = rng.normal(size=(r, c))
        np.testing.assert_allclose(ck.row_softmax_grad(s, up),
                                   pyk.row_softmax_grad(s, up), atol=1e-13)


@needs_compiled
def test_compiled_pairwise_sqdist_agrees_with_python():
    rng = np.random.default_rng(7)
    for _ in range(10):
        m, n, d = rng.integers(1, 18, size=3)
        a = rng.normal(size=(m, d))
        b = rng.normal(size=(n, d))
        np.testing.assert_allclose(ck.pairwise_sqdist(a, b),
                                   pyk.pairwise_sqdist(a, b), atol=1e-11)


@needs_compiled
def test_compiled_kernels_accept_non_contiguous_inputs():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(12, 10))[::2, ::2]
    b = rng.normal(size=(10, 8))[::2, :]
    assert not a.flags["C_CONTIGUOUS"]
    np.testing.assert_allclose(ck.matmul(a, b), pyk.matmul(a, b), rtol=1e-12)
    np.testing.assert_allclose(ck.row_softmax(a), pyk.row_softmax(a), atol=1e-14)
