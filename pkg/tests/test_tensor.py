"""Core tensor ops against independent naive oracles."""

import numpy as np
import pytest

from forgelens.autodiff import (
    Tensor,
    concat,
    log_softmax,
    matmul,
    reduce_mean,
    reduce_sum,
    softmax,
)
from forgelens.autodiff.tensor import absval, clip, maximum, minimum, narrow, reshape, transpose
from forgelens.errors import DimensionError, NumericError, UsageError


def naive_matmul(a, b):
    """Triple-loop reference product."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


class TestMatmul:
    def test_identity(self, rng):
        a = rng.normal(size=(2, 2))
        out = matmul(Tensor(np.eye(2)), Tensor(a))
        np.testing.assert_allclose(out.data, a, rtol=1e-6)

    def test_against_naive_oracle(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0], [6.0]])
        expected = naive_matmul(a, b)
        assert expected.tolist() == [[17.0], [39.0]]
        out = matmul(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64))
        np.testing.assert_array_equal(out.data, expected)

    def test_zero_annihilates(self, rng):
        a = rng.normal(size=(3, 3))
        out = matmul(Tensor(np.zeros((3, 3))), Tensor(a))
        assert not out.data.any()

    def test_random_8x8_matches_oracle(self, rng):
        a = rng.normal(size=(8, 8))
        b = rng.normal(size=(8, 8))
        out = matmul(Tensor(a, dtype=np.float64), Tensor(b, dtype=np.float64))
        np.testing.assert_allclose(out.data, naive_matmul(a, b), rtol=1e-6)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_batched_matches_per_slice(self, rng):
        a = rng.normal(size=(3, 4, 5))
        b = rng.normal(size=(3, 5, 2))
        out = matmul(Tensor(a), Tensor(b))
        for i in range(3):
            np.testing.assert_allclose(out.data[i], a[i] @ b[i], rtol=1e-5)


class TestSoftmax:
    def test_symmetry(self):
        out = softmax(Tensor([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_large_inputs_do_not_overflow(self):
        out = softmax(Tensor([1000.0, 1000.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5])
        assert np.isfinite(out.data).all()

    def test_rows_sum_to_one_entries_in_unit_interval(self, rng):
        x = rng.normal(size=(6, 9)) * 10
        out = softmax(Tensor(x), axis=-1)
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(6), atol=1e-6)
        assert ((out.data > 0) & (out.data < 1)).all()

    def test_log_softmax_against_high_precision_oracle(self):
        x = np.array([1.0, 2.0, 3.0])
        oracle = np.log(np.exp(x) / np.exp(x).sum())
        out = log_softmax(Tensor(x, dtype=np.float64))
        np.testing.assert_allclose(out.data, oracle, rtol=1e-12)

    def test_nan_input_raises(self):
        with pytest.raises(NumericError):
            softmax(Tensor([np.nan, 1.0]))
        with pytest.raises(NumericError):
            log_softmax(Tensor([np.inf, 1.0]))


class TestBackwardBasics:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        reduce_sum(x).backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4), dtype=np.float32))

    def test_square_gradient_is_twice_input(self, rng):
        data = rng.normal(size=(5,)).astype(np.float32)
        x = Tensor(data, requires_grad=True)
        reduce_sum(x * x).backward()
        np.testing.assert_allclose(x.grad, 2 * data, rtol=1e-6)

    def test_backward_requires_scalar(self, rng):
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        with pytest.raises(UsageError):
            (x * x).backward()

    def test_grad_accumulates_across_backward_calls(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        reduce_sum(x).backward()
        reduce_sum(x).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])

    def test_each_node_contributes_once_in_diamond_graph(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * 2.0
        z = reduce_sum(y * y)  # z = 4 x^2, dz/dx = 8x = 24
        z.backward()
        np.testing.assert_allclose(x.grad, [24.0], rtol=1e-6)


class TestElementwiseAndShape:
    def test_broadcast_add_gradient_unbroadcasts(self):
        a = Tensor(np.ones((2, 3)), requires_grad=True)
        b = Tensor(np.ones((3,)), requires_grad=True)
        reduce_sum(a + b).backward()
        np.testing.assert_array_equal(a.grad, np.ones((2, 3), dtype=np.float32))
        np.testing.assert_array_equal(b.grad, np.full(3, 2.0, dtype=np.float32))

    def test_narrow_and_concat_round_trip(self, rng):
        x = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        top = narrow(x, (slice(0, 2), slice(None)))
        bottom = narrow(x, (slice(2, None), slice(None)))
        again = concat([top, bottom], axis=0)
        np.testing.assert_array_equal(again.data, x.data)
        reduce_sum(again * again).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-6)

    def test_transpose_reshape_gradients(self, rng):
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        y = reshape(transpose(x), (12,))
        reduce_sum(y * y).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data, rtol=1e-6)

    def test_clip_abs_minmax_values(self):
        x = Tensor([-1.5, 0.25, 2.0])
        np.testing.assert_array_equal(clip(x, 0.0, 1.0).data, [0.0, 0.25, 1.0])
        np.testing.assert_array_equal(absval(x).data, [1.5, 0.25, 2.0])
        y = Tensor([0.0, 0.5, 1.0])
        np.testing.assert_array_equal(maximum(x, y).data, [0.0, 0.5, 2.0])
        np.testing.assert_array_equal(minimum(x, y).data, [-1.5, 0.25, 1.0])

    def test_mean_matches_numpy(self, rng):
        x = rng.normal(size=(3, 5))
        out = reduce_mean(Tensor(x), axis=1)
        np.testing.assert_allclose(out.data, x.mean(axis=1), rtol=1e-6)

    def test_forward_ops_stay_finite_on_finite_inputs(self, rng):
        from forgelens.autodiff import exp, gelu, sigmoid

        x = Tensor(rng.normal(size=(64,)) * 5)
        for op in (sigmoid, gelu):
            assert np.isfinite(op(x).data).all()
        assert np.isfinite(exp(Tensor(rng.normal(size=(64,)))).data).all()
