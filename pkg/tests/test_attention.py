"""Attention contracts: naive oracles, degeneracies, invariances."""

import math

import numpy as np
import pytest

from forgelens.autodiff import Tensor, attention, multi_head_attention
from forgelens.errors import ConfigError, DimensionError


def naive_attention(q, k, v):
    """Per-element double-loop reference."""
    nq, d = q.shape
    nk = k.shape[0]
    out = np.zeros((nq, v.shape[1]), dtype=np.float64)
    for i in range(nq):
        logits = np.array([sum(q[i, t] * k[j, t] for t in range(d)) / math.sqrt(d)
                           for j in range(nk)])
        weights = np.exp(logits - logits.max())
        weights /= weights.sum()
        for j in range(nk):
            out[i] += weights[j] * v[j]
    return out


class TestAttention:
    def test_single_key_returns_value_row(self, rng):
        q = Tensor(rng.normal(size=(3, 4)))
        k = Tensor(rng.normal(size=(1, 4)))
        v = Tensor(rng.normal(size=(1, 4)))
        out = attention(q, k, v)
        for i in range(3):
            np.testing.assert_allclose(out.data[i], v.data[0], rtol=1e-6)

    def test_orthogonal_queries_give_column_mean(self, rng):
        # queries orthogonal to every key -> zero logits -> uniform weights
        k = np.zeros((3, 4))
        k[:, 0] = [1.0, 2.0, -1.0]
        q = np.zeros((2, 4))
        q[:, 1] = [5.0, -3.0]
        v = rng.normal(size=(3, 4))
        out = attention(Tensor(q), Tensor(k), Tensor(v))
        for i in range(2):
            np.testing.assert_allclose(out.data[i], v.mean(axis=0), rtol=1e-5, atol=1e-7)

    def test_matches_naive_oracle(self, rng):
        q = rng.normal(size=(2, 5))
        k = rng.normal(size=(3, 5))
        v = rng.normal(size=(3, 5))
        out = attention(Tensor(q, dtype=np.float64), Tensor(k, dtype=np.float64),
                        Tensor(v, dtype=np.float64))
        np.testing.assert_allclose(out.data, naive_attention(q, k, v), rtol=1e-10)

    def test_output_bounded_by_value_columns(self, rng):
        q = Tensor(rng.normal(size=(4, 6)) * 3)
        k = Tensor(rng.normal(size=(5, 6)) * 3)
        v = rng.normal(size=(5, 6))
        out = attention(q, k, Tensor(v)).data
        lo, hi = v.min(axis=0), v.max(axis=0)
        assert (out >= lo - 1e-6).all() and (out <= hi + 1e-6).all()

    def test_joint_kv_permutation_invariance(self, rng):
        # Exact bit equality is unattainable: both the softmax denominator
        # and the value reduction re-associate under row permutation, so the
        # invariance is checked at float32 reassociation noise instead.
        q = rng.normal(size=(2, 4)).astype(np.float32)
        k = rng.normal(size=(5, 4)).astype(np.float32)
        v = rng.normal(size=(5, 4)).astype(np.float32)
        base = attention(Tensor(q), Tensor(k), Tensor(v)).data
        for _ in range(4):
            perm = rng.permutation(5)
            permuted = attention(Tensor(q), Tensor(k[perm]), Tensor(v[perm])).data
            np.testing.assert_allclose(permuted, base, rtol=1e-6, atol=1e-7)

    def test_feature_dim_mismatch(self, rng):
        with pytest.raises(DimensionError):
            attention(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 4))))


class TestMultiHead:
    def test_single_head_identity_projection_equals_attention(self, rng):
        q = Tensor(rng.normal(size=(3, 6)))
        k = Tensor(rng.normal(size=(4, 6)))
        v = Tensor(rng.normal(size=(4, 6)))
        w_out = Tensor(np.eye(6, dtype=np.float32))
        got = multi_head_attention(q, k, v, 1, w_out)
        want = attention(q, k, v)
        np.testing.assert_allclose(got.data, want.data, rtol=1e-6)

    def test_two_heads_equal_per_head_oracles(self, rng):
        q = rng.normal(size=(3, 8))
        k = rng.normal(size=(4, 8))
        v = rng.normal(size=(4, 8))
        w_out = Tensor(np.eye(8, dtype=np.float64))
        got = multi_head_attention(Tensor(q, dtype=np.float64), Tensor(k, dtype=np.float64),
                                   Tensor(v, dtype=np.float64), 2, w_out)
        left = naive_attention(q[:, :4], k[:, :4], v[:, :4])
        right = naive_attention(q[:, 4:], k[:, 4:], v[:, 4:])
        np.testing.assert_allclose(got.data, np.concatenate([left, right], axis=1), rtol=1e-10)

    def test_joint_kv_permutation_leaves_output_unchanged(self, rng):
        q = rng.normal(size=(2, 8)).astype(np.float32)
        k = rng.normal(size=(5, 8)).astype(np.float32)
        v = rng.normal(size=(5, 8)).astype(np.float32)
        w_out = Tensor(rng.normal(size=(8, 8)).astype(np.float32))
        base = multi_head_attention(Tensor(q), Tensor(k), Tensor(v), 4, w_out).data
        perm = rng.permutation(5)
        moved = multi_head_attention(Tensor(q), Tensor(k[perm]), Tensor(v[perm]), 4, w_out).data
        np.testing.assert_allclose(base, moved, rtol=1e-5, atol=1e-6)

    def test_indivisible_heads_is_config_error(self, rng):
        t = Tensor(rng.normal(size=(2, 6)))
        with pytest.raises(ConfigError):
            multi_head_attention(t, t, t, 4, Tensor(np.eye(6)))
