"""Convolution kernels against naive scatter/gather oracles, both backends."""

import numpy as np
import pytest

from forgelens.autodiff import Tensor, conv2d, conv_transpose2d, reduce_sum
from forgelens.autodiff.kernels import compiled, reference
from forgelens.errors import ConfigError, DimensionError


def naive_deconv(x, w, stride):
    """Scatter-accumulate oracle for the transposed convolution."""
    kh, kw, ci, co = w.shape
    ih, iw = x.shape[:2]
    out = np.zeros(((ih - 1) * stride + kh, (iw - 1) * stride + kw, co), dtype=np.float64)
    for iy in range(ih):
        for ix in range(iw):
            for ky in range(kh):
                for kx in range(kw):
                    for c in range(ci):
                        for o in range(co):
                            out[iy * stride + ky, ix * stride + kx, o] += x[iy, ix, c] * w[ky, kx, c, o]
    return out


def naive_conv(x, w, stride):
    kh, kw, ci, co = w.shape
    oh = (x.shape[0] - kh) // stride + 1
    ow = (x.shape[1] - kw) // stride + 1
    out = np.zeros((oh, ow, co), dtype=np.float64)
    for oy in range(oh):
        for ox in range(ow):
            for ky in range(kh):
                for kx in range(kw):
                    for c in range(ci):
                        for o in range(co):
                            out[oy, ox, o] += x[oy * stride + ky, ox * stride + kx, c] * w[ky, kx, c, o]
    return out


class TestTransposedConv:
    def test_single_tap_broadcasts_input_value(self):
        x = np.full((1, 1, 1), 3.5, dtype=np.float32)
        w = np.ones((2, 2, 1, 1), dtype=np.float32)
        out = conv_transpose2d(Tensor(x), Tensor(w), stride=2)
        assert out.shape == (2, 2, 1)
        np.testing.assert_array_equal(out.data[..., 0], np.full((2, 2), 3.5))

    def test_2x2_input_matches_scatter_oracle(self, rng):
        x = rng.normal(size=(2, 2, 3))
        w = rng.normal(size=(2, 2, 3, 4))
        out = conv_transpose2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), stride=2)
        np.testing.assert_allclose(out.data, naive_deconv(x, w, 2), rtol=1e-10)

    def test_zero_kernel_gives_zero_output(self, rng):
        x = Tensor(rng.normal(size=(3, 3, 2)))
        out = conv_transpose2d(x, Tensor(np.zeros((2, 2, 2, 5), dtype=np.float32)), stride=2)
        assert not out.data.any()

    def test_output_size_formula(self, rng):
        x = Tensor(rng.normal(size=(4, 4, 2)))
        w = Tensor(rng.normal(size=(3, 3, 2, 2)))
        out = conv_transpose2d(x, w, stride=2)
        assert out.shape == ((4 - 1) * 2 + 3, (4 - 1) * 2 + 3, 2)

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            conv_transpose2d(Tensor(np.zeros((2, 2, 3))), Tensor(np.zeros((2, 2, 4, 5))), stride=2)
        with pytest.raises(ConfigError):
            conv_transpose2d(Tensor(np.zeros((2, 2, 3))), Tensor(np.zeros((2, 2, 3, 5))), stride=0)


class TestConv:
    def test_matches_naive_oracle(self, rng):
        x = rng.normal(size=(6, 6, 3))
        w = rng.normal(size=(2, 2, 3, 4))
        out = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), stride=2)
        np.testing.assert_allclose(out.data, naive_conv(x, w, 2), rtol=1e-10)

    def test_gradients_flow_to_input_and_kernel(self, rng):
        x = Tensor(rng.normal(size=(4, 4, 2)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 2, 2, 3)), requires_grad=True)
        reduce_sum(conv2d(x, w, stride=2)).backward()
        assert x.grad is not None and np.abs(x.grad).sum() > 0
        assert w.grad is not None and np.abs(w.grad).sum() > 0


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
class TestBackendAgreement:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_conv_forward_backward_agree(self, rng, dtype):
        x = rng.normal(size=(8, 8, 6)).astype(dtype)
        w = rng.normal(size=(2, 2, 6, 5)).astype(dtype)
        ref = reference.conv2d_forward(x, w, 2)
        com = compiled.conv2d_forward(x, w, 2)
        np.testing.assert_allclose(com, ref, rtol=1e-4, atol=1e-6)
        g = np.asarray(ref) + 1.0
        gr = reference.conv2d_backward(x, w, g, 2)
        gc = compiled.conv2d_backward(x, w, g, 2)
        np.testing.assert_allclose(gc[0], gr[0], rtol=1e-4, atol=1e-6)
        np.testing.assert_allclose(gc[1], gr[1], rtol=1e-4, atol=1e-5)

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_deconv_forward_backward_agree(self, rng, dtype):
        x = rng.normal(size=(4, 4, 6)).astype(dtype)
        w = rng.normal(size=(2, 2, 6, 5)).astype(dtype)
        ref = reference.deconv2d_forward(x, w, 2)
        com = compiled.deconv2d_forward(x, w, 2)
        np.testing.assert_allclose(com, ref, rtol=1e-4, atol=1e-6)
        g = np.asarray(ref) + 0.5
        gr = reference.deconv2d_backward(x, w, g, 2)
        gc = compiled.deconv2d_backward(x, w, g, 2)
        np.testing.assert_allclose(gc[0], gr[0], rtol=1e-4, atol=1e-6)
        np.testing.assert_allclose(gc[1], gr[1], rtol=1e-4, atol=1e-5)
