import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pxre import kernels
from pxre.kernels import pure

try:
    from pxre.kernels import _fast
except ImportError:
    _fast = None

needs_compiled = pytest.mark.skipif(_fast is None, reason="compiled kernels not built")

RNG = np.random.default_rng(42)


def rand2d(n, d):
    return np.ascontiguousarray(RNG.normal(size=(n, d)))


@needs_compiled
@pytest.mark.parametrize("shape", [(1, 1), (3, 7), (64, 33)])
def test_softmax_parity(shape):
    x = rand2d(*shape)
    np.testing.assert_allclose(_fast.softmax2d(x), pure.softmax2d(x), rtol=1e-13, atol=1e-15)


@needs_compiled
def test_softmax_backward_parity():
    y = pure.softmax2d(rand2d(16, 9))
    dy = rand2d(16, 9)
    np.testing.assert_allclose(
        _fast.softmax2d_backward(y, dy), pure.softmax2d_backward(y, dy), rtol=1e-12, atol=1e-15
    )


@needs_compiled
def test_layernorm_parity():
    x = rand2d(11, 16)
    gamma = RNG.normal(size=16)
    beta = RNG.normal(size=16)
    yf, xf, sf = _fast.layernorm2d(x, gamma, beta, 1e-5)
    yp, xp, sp = pure.layernorm2d(x, gamma, beta, 1e-5)
    np.testing.assert_allclose(yf, yp, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(xf, xp, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(sf, sp, rtol=1e-12)
    dy = rand2d(11, 16)
    outs_f = _fast.layernorm2d_backward(dy, xf, sf, gamma)
    outs_p = pure.layernorm2d_backward(dy, xp, sp, gamma)
    for a, b in zip(outs_f, outs_p):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-12)


@needs_compiled
def test_nll_parity():
    logits = rand2d(9, 21)
    targets = RNG.integers(0, 21, size=9)
    nf, df = _fast.nll2d(logits, targets)
    npu, dpu = pure.nll2d(logits, targets.astype(np.int64))
    np.testing.assert_allclose(nf, npu, rtol=1e-13)
    np.testing.assert_allclose(df, dpu, rtol=1e-12, atol=1e-15)


def test_softmax_rows_sum_to_one():
    x = RNG.normal(size=(1000, 18)) * 5
    s = kernels.softmax(x)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-6)
    assert (s > 0).all()


def test_softmax_nd_shapes():
    x = RNG.normal(size=(2, 3, 4, 5))
    s = kernels.softmax(x)
    assert s.shape == x.shape
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (4, 6), elements=st.floats(-30, 30)),
    st.floats(-50, 50),
)
def test_softmax_shift_invariance(x, c):
    base = kernels.softmax(x)
    shifted = kernels.softmax(x + c)
    np.testing.assert_allclose(base, shifted, atol=1e-9)
    assert (np.argmax(base, axis=-1) == np.argmax(shifted, axis=-1)).all()


def test_layer_norm_backward_finite_difference():
    x = rand2d(3, 8)
    gamma = RNG.normal(size=8)
    beta = RNG.normal(size=8)
    dy = rand2d(3, 8)

    def loss(xv, g, b):
        y, _ = kernels.layer_norm(xv, g, b)
        return float((y * dy).sum())

    _, cache = kernels.layer_norm(x, gamma, beta)
    dx, dgamma, dbeta = kernels.layer_norm_backward(dy, cache, gamma)
    h = 1e-6
    for arr, grad in ((x, dx), (gamma, dgamma), (beta, dbeta)):
        flat = arr.ravel()
        idx = RNG.integers(flat.size, size=4)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = loss(x, gamma, beta)
            flat[i] = orig - h
            down = loss(x, gamma, beta)
            flat[i] = orig
            num = (up - down) / (2 * h)
            assert abs(num - grad.ravel()[i]) < 1e-5 * max(1.0, abs(num))


def test_nll_gradient_finite_difference():
    logits = rand2d(2, 7)
    targets = np.array([3, 0])
    nll, dl = kernels.nll_and_grad(logits, targets)
    h = 1e-6
    for r in range(2):
        for c in range(7):
            orig = logits[r, c]
            logits[r, c] = orig + h
            up = kernels.nll_and_grad(logits, targets)[0].sum()
            logits[r, c] = orig - h
            down = kernels.nll_and_grad(logits, targets)[0].sum()
            logits[r, c] = orig
            num = (up - down) / (2 * h)
            assert abs(num - dl[r, c]) < 1e-6


def test_nll_onehot_is_zero():
    logits = np.full((1, 5), -1e9)
    logits[0, 2] = 1e9
    nll, _ = kernels.nll_and_grad(logits, np.array([2]))
    assert nll[0] == 0.0


def test_backend_reported():
    assert kernels.BACKEND in ("pure", "compiled")
