import numpy as np
import pytest
from scipy.special import digamma, gammaln

from tsforge import autodiff as ad
from tsforge.autodiff import Tensor, no_grad


def leaf(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


def fd_grad(fn, x, eps=1e-6):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (fn(xp) - fn(xm)) / (2 * eps)
        it.iternext()
    return g


UNARY = [
    ("exp", ad.exp, (-1.0, 1.0)),
    ("log", ad.log, (0.2, 3.0)),
    ("sqrt", ad.sqrt, (0.2, 3.0)),
    ("tanh", ad.tanh, (-2.0, 2.0)),
    ("sigmoid", ad.sigmoid, (-3.0, 3.0)),
    ("softplus", ad.softplus, (-3.0, 3.0)),
    ("square", ad.square, (-2.0, 2.0)),
    ("absolute", ad.absolute, (0.2, 2.0)),
    ("log_gamma", ad.log_gamma, (0.5, 6.0)),
]


@pytest.mark.parametrize("name,op,rng_range", UNARY, ids=[u[0] for u in UNARY])
def test_unary_op_gradients(name, op, rng_range):
    rng = np.random.default_rng(0)
    x = rng.uniform(*rng_range, size=(3, 4))

    def f(v):
        with no_grad():
            return float(ad.tsum(op(Tensor(v))).data)

    t = leaf(x)
    out = ad.tsum(op(t))
    out.backward()
    np.testing.assert_allclose(t.grad, fd_grad(f, x), rtol=1e-5, atol=1e-7)


def test_binary_broadcasting_gradients():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4,)) + 2.0
    for op in (ad.add, ad.sub, ad.mul, ad.div, ad.maximum):
        ta, tb = leaf(a), leaf(b)
        out = ad.tsum(op(ta, tb))
        out.backward()

        def fa(v):
            with no_grad():
                return float(ad.tsum(op(Tensor(v), Tensor(b))).data)

        def fb(v):
            with no_grad():
                return float(ad.tsum(op(Tensor(a), Tensor(v))).data)

        np.testing.assert_allclose(ta.grad, fd_grad(fa, a), rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(tb.grad, fd_grad(fb, b), rtol=1e-5, atol=1e-7)


def test_matmul_gradients():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(3, 4))
    B = rng.normal(size=(4, 2))
    ta, tb = leaf(A), leaf(B)
    out = ad.tsum(ad.square(ad.matmul(ta, tb)))
    out.backward()

    def fa(v):
        with no_grad():
            return float(ad.tsum(ad.square(ad.matmul(Tensor(v), Tensor(B)))).data)

    def fb(v):
        with no_grad():
            return float(ad.tsum(ad.square(ad.matmul(Tensor(A), Tensor(v)))).data)

    np.testing.assert_allclose(ta.grad, fd_grad(fa, A), rtol=1e-6)
    np.testing.assert_allclose(tb.grad, fd_grad(fb, B), rtol=1e-6)


def test_structure_op_gradients():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 5))

    def build(t):
        a = t[:, :2]
        b = t[:, 2:]
        c = ad.concat([a, b], axis=1)
        d = ad.pad_left(c, 2, axis=1)
        return ad.tsum(ad.square(ad.reshape(d, (14,))))

    t = leaf(x)
    build(t).backward()

    def f(v):
        with no_grad():
            return float(build(Tensor(v)).data)

    np.testing.assert_allclose(t.grad, fd_grad(f, x), rtol=1e-6)


def test_grad_accumulates_over_reuse():
    t = leaf(2.0)
    out = ad.add(ad.mul(t, t), t)  # x^2 + x -> 2x + 1 = 5
    out.backward()
    assert t.grad == pytest.approx(5.0)


def test_sum_axis_and_mean():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 4))
    t = leaf(x)
    out = ad.tsum(ad.mul(ad.tmean(t, axis=1), np.array([1.0, 2.0, 3.0])))
    out.backward()
    expect = np.repeat(np.array([1.0, 2.0, 3.0])[:, None], 4, axis=1) / 4
    np.testing.assert_allclose(t.grad, expect)


def test_log_gamma_matches_scipy():
    x = np.array([0.7, 1.3, 4.5])
    t = leaf(x)
    out = ad.tsum(ad.log_gamma(t))
    np.testing.assert_allclose(out.data, gammaln(x).sum())
    out.backward()
    np.testing.assert_allclose(t.grad, digamma(x))


def test_no_grad_builds_no_graph():
    t = leaf(np.ones(3))
    with no_grad():
        out = ad.square(t)
    assert not out.requires_grad
    assert out._parents == ()


def test_constants_carry_no_grad():
    t = Tensor(np.ones(3))  # requires_grad False
    out = ad.square(t)
    assert not out.requires_grad


def test_maximum_tie_splits_to_first():
    a, b = leaf(1.0), leaf(1.0)
    ad.maximum(a, b).backward()
    assert a.grad == 1.0 and b.grad == 0.0
