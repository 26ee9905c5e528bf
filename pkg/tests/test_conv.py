import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from txt2img_mhn import tensor as T
from txt2img_mhn.conv import add_channel_bias, conv2d, conv_output_size, conv_transpose2d
from txt2img_mhn.gradcheck import check_gradients
from txt2img_mhn.tensor import DimensionError, Tensor


def naive_conv2d(x, w, stride, pad):
    """Direct loop cross-correlation, the reference for the im2col path."""
    b, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((b, o, ho, wo))
    for n in range(b):
        for f in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[n, f, i, j] = (patch * w[f]).sum()
    return out


@pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (1, 1, 3), (2, 1, 4), (2, 0, 2), (1, 0, 1)])
def test_conv2d_matches_loop_reference(rng, stride, pad, k):
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, k, k))
    np.testing.assert_allclose(conv2d(Tensor(x), Tensor(w), stride, pad).data, naive_conv2d(x, w, stride, pad), atol=1e-10)


@pytest.mark.parametrize("stride,pad,k", [(2, 1, 4), (1, 1, 3), (2, 0, 2)])
def test_transposed_conv_is_the_adjoint(rng, stride, pad, k):
    # <conv(x), y> == <x, conv_t(y)> for the same kernel array
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(5, 3, k, k))
    y_shape = conv2d(Tensor(x), Tensor(w), stride, pad).shape
    y = rng.normal(size=y_shape)
    lhs = (conv2d(Tensor(x), Tensor(w), stride, pad).data * y).sum()
    back = conv_transpose2d(Tensor(y), Tensor(w), stride, pad).data
    assert back.shape == x.shape
    assert lhs == pytest.approx((x * back).sum(), rel=1e-10)


@pytest.mark.parametrize("stride,pad", [(1, 0), (2, 1)])
def test_conv2d_gradients(rng, stride, pad):
    probe = None

    def loss(xs):
        nonlocal probe
        out = conv2d(xs[0], xs[1], stride, pad)
        if probe is None:
            probe = Tensor(np.random.default_rng(5).normal(size=out.shape))
        return T.sum(out * probe)

    errors = check_gradients(loss, [rng.normal(size=(2, 2, 6, 6)), rng.normal(size=(3, 2, 4, 4))])
    assert max(errors) < 1e-3


def test_conv_transpose2d_gradients(rng):
    probe = Tensor(np.random.default_rng(6).normal(size=(2, 2, 8, 8)))
    errors = check_gradients(lambda xs: T.sum(conv_transpose2d(xs[0], xs[1], 2, 1) * probe), [rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(3, 2, 4, 4))])
    assert max(errors) < 1e-3


def test_channel_bias_gradients(rng):
    probe = Tensor(rng.normal(size=(2, 3, 2, 2)))
    errors = check_gradients(lambda xs: T.sum(add_channel_bias(xs[0], xs[1]) * probe), [rng.normal(size=(2, 3, 2, 2)), rng.normal(size=3)])
    assert max(errors) < 1e-3


def test_stride_two_halves_the_grid():
    x = Tensor(np.zeros((1, 3, 32, 32)))
    assert conv2d(x, Tensor(np.zeros((4, 3, 4, 4))), stride=2, pad=1).shape == (1, 4, 16, 16)
    assert conv_transpose2d(Tensor(np.zeros((1, 4, 16, 16))), Tensor(np.zeros((4, 3, 4, 4))), 2, 1).shape == (1, 3, 32, 32)


def test_channel_mismatch_raises():
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.zeros((1, 3, 8, 8))), Tensor(np.zeros((4, 2, 3, 3))))
    with pytest.raises(DimensionError):
        add_channel_bias(Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.zeros(4)))


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 20), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2))
def test_output_size_formula_matches_numpy_windows(size, kernel, stride, pad):
    if kernel > size + 2 * pad:
        return
    out = conv2d(Tensor(np.zeros((1, 1, size, size))), Tensor(np.zeros((1, 1, kernel, kernel))), stride, pad)
    assert out.shape[-1] == conv_output_size(size, kernel, stride, pad) == len(range(0, size + 2 * pad - kernel + 1, stride))
