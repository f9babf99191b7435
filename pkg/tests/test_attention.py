import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import nnls

import oracles
from hmmn.attention import (
    coattention,
    inter_modal,
    query_to_context,
    self_affinity,
    self_attention,
    summarize,
)
from hmmn.numerics import DimensionError

seeds = st.integers(0, 2**31 - 1)


class TestQueryToContext:
    def test_single_slot(self, rng):
        M = rng.normal(size=(3, 1))
        rw = query_to_context(rng.normal(size=3), M)
        assert rw.weights.tolist() == [1.0]
        np.testing.assert_array_equal(rw.memory, M)

    def test_orthogonal_query_gives_uniform(self):
        M = np.array([[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]])
        rw = query_to_context([1.0, 0.0], M)
        np.testing.assert_allclose(rw.weights, np.full(3, 1 / 3), atol=1e-15)

    def test_against_scalar_loop(self, rng):
        q, M = rng.normal(size=3), rng.normal(size=(3, 3))
        w, cols = oracles.query_to_context(list(q), oracles.to_cols(M))
        rw = query_to_context(q, M)
        np.testing.assert_allclose(rw.weights, w, rtol=0, atol=1e-12)
        np.testing.assert_allclose(rw.memory, np.array(cols).T, rtol=0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            query_to_context(np.ones(2), np.ones((3, 4)))

    @settings(max_examples=50)
    @given(seeds)
    def test_column_permutation(self, seed):
        r = np.random.default_rng(seed)
        q, M = r.normal(size=4), r.normal(size=(4, 6))
        perm = r.permutation(6)
        np.testing.assert_allclose(query_to_context(q, M[:, perm]).weights,
                                   query_to_context(q, M).weights[perm], atol=1e-12)


class TestSummarize:
    def test_identical_columns(self, rng):
        c = rng.normal(size=4)
        M = np.tile(c[:, None], (1, 5))
        np.testing.assert_allclose(summarize(rng.normal(size=4), M), c, atol=1e-14)

    def test_single_column(self, rng):
        M = rng.normal(size=(4, 1))
        np.testing.assert_allclose(summarize(rng.normal(size=4), M), M[:, 0], atol=1e-15)

    def test_against_scalar_loop(self, rng):
        q, M = rng.normal(size=4), rng.normal(size=(4, 5))
        expected = oracles.summarize(list(q), oracles.to_cols(M))
        np.testing.assert_allclose(summarize(q, M), expected, rtol=0, atol=1e-12)

    @settings(max_examples=50)
    @given(seeds)
    def test_inside_convex_hull(self, seed):
        r = np.random.default_rng(seed)
        q, M = r.normal(size=3), r.normal(size=(3, 5))
        u = summarize(q, M)
        # nonnegative weights summing to one must reproduce u
        system = np.vstack([M, 1e3 * np.ones((1, 5))])
        target = np.concatenate([u, [1e3]])
        _, residual = nnls(system, target)
        assert residual < 1e-8

    @settings(max_examples=50)
    @given(seeds)
    def test_column_permutation(self, seed):
        r = np.random.default_rng(seed)
        q, M = r.normal(size=4), r.normal(size=(4, 6))
        np.testing.assert_allclose(summarize(q, M[:, r.permutation(6)]), summarize(q, M),
                                   rtol=0, atol=1e-12)


class TestInterModal:
    def test_rank_one(self, rng):
        X, s = rng.normal(size=(3, 4)), rng.normal(size=(3, 1))
        expected = s * (s[:, 0] @ X)
        np.testing.assert_allclose(inter_modal(X, s), expected, atol=1e-13)

    def test_orthogonal_column_maps_to_zero(self):
        X = np.array([[0.0, 1.0], [0.0, 2.0], [1.0, 0.0]])
        Y = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        out = inter_modal(X, Y)
        np.testing.assert_array_equal(out[:, 0], 0.0)

    def test_against_scalar_loop(self, rng):
        X, Y = rng.normal(size=(3, 2)), rng.normal(size=(3, 3))
        expected = oracles.inter_modal(oracles.to_cols(X), oracles.to_cols(Y))
        np.testing.assert_allclose(inter_modal(X, Y), np.array(expected).T, rtol=0, atol=1e-12)

    def test_zero_input(self, rng):
        assert np.array_equal(inter_modal(np.zeros((3, 2)), rng.normal(size=(3, 4))), np.zeros((3, 2)))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            inter_modal(np.ones((3, 2)), np.ones((4, 2)))

    @settings(max_examples=50)
    @given(seeds, st.floats(-3, 3), st.floats(-3, 3))
    def test_linear_in_X_quadratic_in_Y(self, seed, a, b):
        r = np.random.default_rng(seed)
        X1, X2, Y = r.normal(size=(4, 2)), r.normal(size=(4, 2)), r.normal(size=(4, 3))
        np.testing.assert_allclose(inter_modal(a * X1 + b * X2, Y),
                                   a * inter_modal(X1, Y) + b * inter_modal(X2, Y), atol=1e-10)
        np.testing.assert_allclose(inter_modal(X1, a * Y), a * a * inter_modal(X1, Y), atol=1e-10)

    def test_normalized_rows_on_simplex(self, rng):
        C = coattention(rng.normal(size=(3, 4)), rng.normal(size=(3, 5)), normalize=True)
        np.testing.assert_allclose(C.sum(axis=1), 1.0, atol=1e-14)


class TestSelfAttention:
    def test_single_slot_is_zero(self, rng):
        assert np.array_equal(self_attention(rng.normal(size=(3, 1))), np.zeros((3, 1)))

    def test_orthogonal_columns(self):
        M = np.array([[2.0, 0.0], [0.0, -1.5], [0.0, 0.0]])
        assert np.array_equal(self_attention(M), np.zeros((3, 2)))

    def test_against_scalar_loop(self, rng):
        M = rng.normal(size=(4, 3))
        expected = oracles.self_attention(oracles.to_cols(M))
        np.testing.assert_allclose(self_attention(M), np.array(expected).T, rtol=0, atol=1e-12)

    def test_affinity_diagonal_is_zero(self, rng):
        assert np.array_equal(np.diag(self_affinity(rng.normal(size=(3, 5)))), np.zeros(5))

    @settings(max_examples=50)
    @given(seeds, st.floats(-5, 5))
    def test_own_column_never_contributes(self, seed, c):
        # scaling column i changes out[:, i] only through the other columns' coefficients,
        # which scale by c as well, so out[:, i] is exactly linear in c
        r = np.random.default_rng(seed)
        M = r.normal(size=(3, 4))
        N = M.copy()
        N[:, 1] *= c
        np.testing.assert_allclose(self_attention(N)[:, 1], c * self_attention(M)[:, 1], atol=1e-10)
