import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from privdist.matrix import SeededRng, ShapeError, as_matrix, frobenius_norm, gaussian_matrix, gram, matmul

from conftest import naive_matmul


class TestMatmul:
    def test_identity(self, rng):
        A = rng.normal((3, 3))
        np.testing.assert_array_equal(matmul(np.eye(3), A), A)

    def test_ones_count(self):
        np.testing.assert_array_equal(matmul(np.ones((1, 3)), np.ones((3, 1))), [[3.0]])

    def test_matches_triple_loop_exactly(self, rng):
        a, b = rng.normal((4, 3)), rng.normal((3, 2))
        np.testing.assert_array_equal(matmul(a, b), naive_matmul(a, b))

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_vector_promotion(self, rng):
        A, v = rng.normal((4, 3)), rng.normal(3)
        np.testing.assert_allclose(matmul(A, v), A @ v, rtol=1e-14)
        assert matmul(v, A.T).shape == (4,)

    @given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32))
    def test_associativity(self, n, p, q, r, seed):
        g = SeededRng(seed)
        A, B, C = g.normal((n, p)), g.normal((p, q)), g.normal((q, r))
        left, right = matmul(matmul(A, B), C), matmul(A, matmul(B, C))
        scale = np.abs(A) @ np.abs(B) @ np.abs(C)
        assert np.all(np.abs(left - right) <= 1e-10 * np.maximum(scale, 1e-300))

    def test_gram_is_transpose_product(self, rng):
        X = rng.normal((7, 4))
        np.testing.assert_allclose(gram(X), X.T @ X, rtol=1e-12, atol=1e-12)


class TestFrobenius:
    def test_zero(self):
        assert frobenius_norm(np.zeros((3, 2))) == 0.0

    def test_identity(self):
        assert frobenius_norm(np.eye(2)) == pytest.approx(np.sqrt(2), rel=1e-15)

    def test_against_elementwise_oracle(self, rng):
        A = rng.normal((5, 5))
        acc = 0.0
        for v in A.ravel():
            acc += v * v
        assert frobenius_norm(A) == np.sqrt(acc)  # same one-pass order, exact

    def test_empty(self):
        assert frobenius_norm(np.zeros((0, 3))) == 0.0


class TestSeededRng:
    def test_determinism(self):
        a = gaussian_matrix(4, 3, 1.0, SeededRng(5, 2))
        b = gaussian_matrix(4, 3, 1.0, SeededRng(5, 2))
        np.testing.assert_array_equal(a, b)

    def test_moments(self):
        x = gaussian_matrix(1, 100_000, 1.0, SeededRng(1)).ravel()
        assert abs(x.mean()) < 0.02
        assert abs(x.std() - 1.0) < 0.02

    def test_sum_of_party_draws_has_centralized_stddev(self):
        d, M = 10, 4
        total = sum(gaussian_matrix(200, 100, 1 / (np.sqrt(M) * d), SeededRng(3, m)) for m in range(M))
        assert total.std() == pytest.approx(1 / d, rel=0.05)

    def test_streams_differ(self):
        a = SeededRng(9, 0).uint64(10_000)
        b = SeededRng(9, 1).uint64(10_000)
        c = SeededRng(9, 0).child("x").uint64(10_000)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_children_are_stable(self):
        a = SeededRng(4).child("party", 2).uniform(5)
        b = SeededRng(4).child("party", 2).uniform(5)
        np.testing.assert_array_equal(a, b)

    def test_randbits_range(self):
        v = SeededRng(2).randbits(100, 1000)
        assert all(0 <= int(x) < 2**100 for x in v)
        assert max(int(x) for x in v) > 2**98

    def test_bad_stddev(self, rng):
        with pytest.raises(ValueError):
            gaussian_matrix(2, 2, 0.0, rng)


class TestAsMatrix:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            as_matrix([[1.0, np.nan]])

    def test_rejects_vector(self):
        with pytest.raises(ShapeError):
            as_matrix([1.0, 2.0])
