import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from privdist.data import topic_corpus
from privdist.matrix import SeededRng, ShapeError
from privdist.nmf import (
    DomainError,
    NmfParams,
    RankError,
    init_w,
    nnls_objective,
    nnsvd_init,
    normalize_rows,
    objective,
    random_init,
    residual,
    rri_nmf,
    simplex_project,
    sweep,
    update_t_row,
    update_w_column,
)

finite = st.floats(-10, 10, allow_nan=False)


def sorted_projection(v):
    """Sort-and-threshold projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(v) + 1)
    rho = j[u - (css - 1) / j > 0][-1]
    tau = (css[rho - 1] - 1) / rho
    return np.maximum(v - tau, 0)


def loop_objective(X, W, T, a, b, g, dl):
    n, d = X.shape
    k = T.shape[0]
    fit = 0.0
    for i in range(n):
        for j in range(d):
            fit += (X[i, j] - sum(W[i, l] * T[l, j] for l in range(k))) ** 2
    reg = sum(a * abs(v) + 0.5 * b * v * v for v in T.ravel())
    reg += sum(g * abs(v) + 0.5 * dl * v * v for v in W.ravel())
    return 0.5 * fit + reg


def instance(seed, n=12, d=9, k=3):
    g = SeededRng(seed)
    return g.uniform((n, d)), g.uniform((n, k)), g.uniform((k, d))


class TestObjective:
    def test_zero_factors(self):
        X = SeededRng(1).uniform((5, 4))
        val = objective(X, np.zeros((5, 2)), np.zeros((2, 4)), NmfParams(2))
        np.testing.assert_allclose(val, 0.5 * np.sum(X**2), rtol=1e-14)

    def test_exact_factorization(self):
        _, W, T = instance(2)
        assert objective(W @ T, W, T, NmfParams(3)) == pytest.approx(0.0, abs=1e-24)

    @pytest.mark.parametrize("seed", range(3))
    def test_term_by_term(self, seed):
        X, W, T = instance(seed)
        p = NmfParams(3, 0.1, 0.2, 0.3, 0.4)
        np.testing.assert_allclose(objective(X, W, T, p), loop_objective(X, W, T, 0.1, 0.2, 0.3, 0.4), rtol=1e-12)

    def test_shape_mismatch(self):
        X, W, T = instance(0)
        with pytest.raises(ShapeError):
            objective(X, W[:, :2], T, NmfParams(3))


class TestResidual:
    def test_single_topic(self):
        X, W, T = instance(0, k=1)
        np.testing.assert_array_equal(residual(X, W, T, 0), X)

    def test_zero_w(self):
        X, _, T = instance(1)
        for t in range(3):
            np.testing.assert_array_equal(residual(X, np.zeros((12, 3)), T, t), X)

    @given(st.integers(0, 2**32), st.integers(0, 2))
    def test_forms_agree(self, seed, t):
        X, W, T = instance(seed)
        np.testing.assert_allclose(residual(X, W, T, t), residual(X, W, T, t, "add-back"), atol=1e-10)

    def test_bad_topic(self):
        X, W, T = instance(0)
        with pytest.raises(IndexError):
            residual(X, W, T, 3)


class TestUpdates:
    def test_unit_row_selects_column(self):
        R = SeededRng(3).normal((6, 4))
        np.testing.assert_array_equal(update_w_column(R, np.eye(4)[0], 0, 0), np.maximum(R[:, 0], 0))

    def test_unit_column_selects_row(self):
        R = SeededRng(3).normal((6, 4))
        np.testing.assert_array_equal(update_t_row(np.eye(6)[0], R, 0, 0), np.maximum(R[0], 0))

    def test_large_threshold_zeroes(self):
        R = SeededRng(4).uniform((6, 4))
        assert not update_w_column(R, np.ones(4), 1e6, 0).any()

    def test_zero_column_with_ridge(self):
        R = SeededRng(4).uniform((6, 4))
        assert not update_t_row(np.zeros(6), R, 0.0, 0.5).any()

    def test_zero_denominator_guarded(self):
        R = SeededRng(4).uniform((6, 4))
        out = update_t_row(np.zeros(6), R, 0.0, 0.0)
        assert np.all(np.isfinite(out)) and not out.any()

    @pytest.mark.parametrize("seed", range(3))
    def test_scalar_loop_oracle(self, seed):
        g = SeededRng(seed)
        R, w, t = g.normal((7, 5)), g.uniform(7), g.uniform(5)
        a, b, gm, dl = 0.1, 0.3, 0.2, 0.4
        col = np.array([max(sum(R[i, j] * t[j] for j in range(5)) - gm, 0) / (sum(v * v for v in t) + dl) for i in range(7)])
        row = np.array([max(sum(w[i] * R[i, j] for i in range(7)) - a, 0) / (sum(v * v for v in w) + b) for j in range(5)])
        np.testing.assert_allclose(update_w_column(R, t, gm, dl), col, rtol=1e-12)
        np.testing.assert_allclose(update_t_row(w, R, a, b), row, rtol=1e-12)


class TestSimplex:
    @pytest.mark.parametrize(
        "v,expected",
        [([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]), ([2, 0, 0], [1, 0, 0]), ([0.5, 0.5, 0.5], [1 / 3] * 3)],
    )
    def test_hand_cases(self, v, expected):
        np.testing.assert_allclose(simplex_project(np.array(v, float)), expected, atol=1e-15)

    def test_fuzz_against_sort_oracle(self):
        g = SeededRng(11)
        for i in range(1000):
            v = g.normal(1 + i % 20) * (1 + i % 7)
            np.testing.assert_allclose(simplex_project(v), sorted_projection(v), atol=1e-12)

    @given(arrays(np.float64, st.integers(1, 30), elements=finite))
    def test_on_simplex(self, v):
        x = simplex_project(v)
        assert np.all(x >= 0)
        assert abs(x.sum() - 1) <= 1e-12

    @given(arrays(np.float64, st.integers(1, 10), elements=finite))
    def test_idempotent(self, v):
        x = simplex_project(v)
        np.testing.assert_allclose(simplex_project(x), x, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ShapeError):
            simplex_project(np.array([]))


class TestInit:
    def test_random_init(self):
        T = random_init(4, 7, SeededRng(5))
        assert np.all((T >= 0) & (T <= 1))
        np.testing.assert_allclose(T.sum(axis=1), 1, atol=1e-15)
        np.testing.assert_array_equal(T, random_init(4, 7, SeededRng(5)))

    def test_normalize_zero_row_is_uniform(self):
        np.testing.assert_array_equal(normalize_rows(np.zeros((1, 4))), [[0.25] * 4])

    def test_nnsvd_rank_one(self):
        g = SeededRng(6)
        u, v = g.uniform(8) + 0.1, g.uniform(5) + 0.1
        T = nnsvd_init(np.outer(u, v), 1)
        np.testing.assert_allclose(T[0], v / v.sum(), rtol=1e-12)

    def test_nnsvd_nonnegative(self):
        for i in range(100):
            g = SeededRng(7, i)
            X = g.uniform((10 + i % 5, 8)) ** 2
            assert np.all(nnsvd_init(X, 1 + i % 5) >= 0)

    def test_nnsvd_usually_beats_random(self):
        # the head start shows in early sweeps; later both reach unrelated local optima
        wins = 0
        for i in range(10):
            X, _, _ = topic_corpus(60, 30, 4, SeededRng(8, i))
            p = NmfParams(4, max_iters=5, tol=0)
            a = rri_nmf(X, p, nnsvd_init(X, 4))
            b = rri_nmf(X, p, random_init(4, 30, SeededRng(9, i)))
            wins += objective(X, a.W, a.T, p) <= objective(X, b.W, b.T, p)
        assert wins >= 8

    def test_nnsvd_rank_error(self):
        with pytest.raises(RankError):
            nnsvd_init(np.ones((3, 5)), 4)

    def test_nnsvd_negative(self):
        with pytest.raises(DomainError):
            nnsvd_init(-np.ones((3, 3)), 1)

    def test_init_w_is_nnls(self):
        X, _, T = instance(3)
        W = init_w(X, T)
        assert np.all(W >= 0)
        np.testing.assert_allclose(0.5 * np.sum((X - W @ T) ** 2), nnls_objective(X, T), rtol=1e-12)


class TestRriNmf:
    def test_fixed_point(self):
        _, W, T = instance(4, n=20, d=10, k=3)
        p = NmfParams(3, max_iters=5, project_simplex=False)
        model = rri_nmf(W @ T, p, T)
        assert objective(W @ T, model.W, model.T, p) <= 1e-24
        np.testing.assert_allclose(model.T, T, atol=1e-12)

    def test_monotone_descent(self):
        X = SeededRng(12).uniform((50, 20))
        p = NmfParams(4, max_iters=30, tol=0, project_simplex=False)
        trace = []
        rri_nmf(X, p, random_init(4, 20, SeededRng(13)), callback=lambda e, t, W, T, R: trace.append(objective(X, W, T, p)))
        assert len(trace) == 2 * 4 * 30
        assert np.all(np.diff(trace) <= 1e-12 * trace[0])

    def test_kkt_after_row_update(self):
        X = SeededRng(14).uniform((30, 12))
        p = NmfParams(3, max_iters=10, tol=0, project_simplex=False)
        worst = []

        def check(event, t, W, T, R):
            if event != "t":
                return
            grad = -W[:, t] @ R + (W[:, t] @ W[:, t]) * T[t]
            pos = T[t] > 0
            worst.append(max(np.max(np.abs(grad[pos]), initial=0), np.max(-grad[~pos], initial=0)))

        rri_nmf(X, p, random_init(3, 12, SeededRng(15)), callback=check)
        assert max(worst) <= 1e-8

    def test_projection_keeps_rows_on_simplex(self):
        X, _, _ = topic_corpus(40, 15, 3, SeededRng(16))
        model = rri_nmf(X, NmfParams(3, alpha=0.01, beta=0.1, max_iters=20), random_init(3, 15, SeededRng(17)))
        np.testing.assert_allclose(model.T.sum(axis=1), 1, atol=1e-12)
        assert np.all(model.W >= 0) and np.all(model.T >= 0)

    @given(st.integers(0, 2**32))
    def test_nonnegativity(self, seed):
        g = SeededRng(seed)
        X = g.uniform((15, 8))
        p = NmfParams(3, 0.05, 0.1, 0.05, 0.1, max_iters=5, project_simplex=bool(seed % 2))
        model = rri_nmf(X, p, random_init(3, 8, g.child("T0")))
        assert np.all(model.W >= 0) and np.all(model.T >= 0)

    def test_incremental_residual(self):
        X = SeededRng(18).uniform((25, 10))
        p = NmfParams(4, 0.01, 0.1, 0.01, 0.1)
        T = random_init(4, 10, SeededRng(19))
        W = init_w(X, T)
        E = X - W @ T
        for _ in range(20):
            sweep(X, W, T, E, p)
            np.testing.assert_allclose(E, X - W @ T, atol=1e-9)

    def test_convergence_flag(self):
        X, _, _ = topic_corpus(30, 12, 2, SeededRng(20))
        model = rri_nmf(X, NmfParams(2, max_iters=2000, tol=1e-8), random_init(2, 12, SeededRng(21)))
        assert model.converged and model.n_iter < 2000

    def test_negative_data(self):
        with pytest.raises(DomainError):
            rri_nmf(-np.ones((3, 3)), NmfParams(1), np.ones((1, 3)) / 3)

    def test_wrong_t0_shape(self):
        with pytest.raises(ShapeError):
            rri_nmf(np.ones((3, 3)), NmfParams(2), np.ones((1, 3)))

    def test_params_validation(self):
        with pytest.raises(ValueError):
            NmfParams(0)
        with pytest.raises(ValueError):
            NmfParams(2, alpha=-1)


class TestTaylorIdentity:
    def test_quadratic_growth_at_convergence(self):
        g = SeededRng(22)
        X = (g.uniform((60, 3)) + 0.5) @ (g.uniform((3, 15)) + 0.5) + 0.01 * g.uniform((60, 15))
        p = NmfParams(3, max_iters=5000, tol=1e-14, project_simplex=False)
        model = rri_nmf(X, p, random_init(3, 15, SeededRng(23)))
        W, T = model.W, model.T
        for t in range(3):
            R = residual(X, W, T, t)

            def d_t(row):
                return np.sum((R - np.outer(W[:, t], row)) ** 2)

            delta = g.normal(15)
            delta *= 1e-4 / np.linalg.norm(delta)
            w2 = W[:, t] @ W[:, t]
            # the Hessian in T_t is 2 ||W_t||^2 I
            gap = d_t(T[t] + delta) - d_t(T[t]) - np.dot(delta, delta) * w2
            assert abs(gap) <= 1e-6 * w2
