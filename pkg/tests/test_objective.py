import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accelstab.errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NonSymmetric,
    NotPositiveDefinite,
    ValidationError,
)
from accelstab.objective import (
    build_objective,
    eigendecompose,
    from_eigenbasis,
    gradient,
    log_spaced_objective,
    read_matrix_file,
    smoothness_constant,
    suboptimality,
    to_eigenbasis,
    value,
    write_matrix_file,
)


def random_spd(rng, n):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(rng.uniform(0.1, 20.0, n)) @ q.T


class TestBuildObjective:
    def test_scalar(self):
        obj = build_objective([[10.0]], [0.0])
        assert obj.L == 10.0
        assert obj.dim == 1

    def test_log_spaced_default(self):
        obj = log_spaced_objective(5, 10.0)
        assert obj.L == 10.0
        assert obj.eigenvalues[0] == pytest.approx(1.0)
        ratios = obj.eigenvalues[1:] / obj.eigenvalues[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_log_spaced_one_dim_is_stiffest_mode(self):
        obj = log_spaced_objective(1, 7.0)
        np.testing.assert_array_equal(obj.A, [[7.0]])

    def test_two_by_two_eigenvalues(self):
        # characteristic polynomial lambda^2 - 4 lambda + 3
        obj = build_objective([[2.0, 1.0], [1.0, 2.0]], [0.0, 0.0])
        np.testing.assert_allclose(obj.eigenvalues, [1.0, 3.0], atol=1e-14)
        assert smoothness_constant(obj) == pytest.approx(3.0)

    def test_gradient_vanishes_at_minimizer(self, rng):
        obj = build_objective(random_spd(rng, 4), rng.standard_normal(4))
        assert np.linalg.norm(gradient(obj, obj.x_star)) <= 1e-12

    def test_rejects_non_symmetric(self):
        with pytest.raises(NonSymmetric):
            build_objective([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0])

    def test_tiny_asymmetry_is_tolerated(self):
        obj = build_objective([[2.0, 1.0 + 1e-13], [1.0, 2.0]], [0.0, 0.0])
        np.testing.assert_array_equal(obj.A, obj.A.T)

    @pytest.mark.parametrize("A", [[[1.0, 0.0], [0.0, 0.0]], [[1.0, 2.0], [2.0, 1.0]], [[-1.0]]])
    def test_rejects_not_positive_definite(self, A):
        with pytest.raises(NotPositiveDefinite):
            build_objective(A, np.zeros(len(A)))

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            build_objective(np.eye(3), [0.0, 0.0])
        with pytest.raises(DimensionMismatch):
            build_objective(np.ones((2, 3)), [0.0, 0.0])

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            build_objective([[np.nan]], [0.0])

    def test_arrays_are_read_only(self):
        obj = log_spaced_objective(3, 10.0)
        with pytest.raises(ValueError):
            obj.A[0, 0] = 5.0


class TestEigendecompose:
    def test_diagonal_gives_permutation(self):
        eig = eigendecompose(np.diag([3.0, 1.0]))
        np.testing.assert_allclose(eig.eigenvalues, [1.0, 3.0])
        np.testing.assert_allclose(np.abs(eig.basis), [[0.0, 1.0], [1.0, 0.0]])

    def test_two_by_two_eigenvectors(self):
        eig = eigendecompose([[2.0, 1.0], [1.0, 2.0]])
        s = 1.0 / math.sqrt(2.0)
        # first non-negligible entry is made positive
        np.testing.assert_allclose(eig.basis[:, 0], [s, -s], atol=1e-14)
        np.testing.assert_allclose(eig.basis[:, 1], [s, s], atol=1e-14)

    def test_seeded_random_reconstruction(self, rng):
        a = rng.standard_normal((5, 5))
        a = a + a.T
        eig = eigendecompose(a)
        recon = eig.basis @ np.diag(eig.eigenvalues) @ eig.basis.T
        assert np.max(np.abs(recon - a)) < 1e-9

    def test_hundred_spd_matrices_against_numpy(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 11))
            a = random_spd(rng, n)
            eig = eigendecompose(a)
            p = eig.basis
            assert np.max(np.abs(p.T @ p - np.eye(n))) < 1e-10
            assert np.max(np.abs(p @ np.diag(eig.eigenvalues) @ p.T - a)) < 1e-9
            assert np.all(np.diff(eig.eigenvalues) >= 0)
            np.testing.assert_allclose(eig.eigenvalues, np.linalg.eigvalsh(a), rtol=1e-10, atol=1e-10)

    def test_repeated_eigenvalues(self):
        eig = eigendecompose(np.eye(4) * 2.5)
        np.testing.assert_allclose(eig.eigenvalues, 2.5)
        np.testing.assert_allclose(eig.basis, np.eye(4))

    def test_sweep_limit(self, rng):
        a = rng.standard_normal((6, 6))
        with pytest.raises(ConvergenceFailure):
            eigendecompose(a + a.T, tol=0.0, max_sweeps=1)

    def test_deterministic(self, rng):
        a = random_spd(rng, 6)
        e1, e2 = eigendecompose(a), eigendecompose(a)
        np.testing.assert_array_equal(e1.basis, e2.basis)


class TestValueAndGradient:
    def test_value_examples(self):
        assert value(build_objective([[10.0]], [0.0]), [1.0]) == 5.0
        assert value(build_objective(np.diag([1.0, 3.0]), [0.0, 0.0]), [2.0, 2.0]) == 8.0
        obj = log_spaced_objective(5, 10.0)
        assert suboptimality(obj, obj.x_star) == 0.0

    def test_gradient_scalar(self):
        np.testing.assert_allclose(gradient(build_objective([[10.0]], [0.0]), [2.0]), [20.0])

    def test_gradient_matches_central_differences(self, rng):
        obj = build_objective(random_spd(rng, 5), rng.standard_normal(5))
        h = 1e-5
        for _ in range(100):
            x = obj.x_star + rng.standard_normal(5)
            fd = np.array([(value(obj, x + h * e) - value(obj, x - h * e)) / (2 * h) for e in np.eye(5)])
            g = gradient(obj, x)
            assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)

    def test_wrong_length(self):
        with pytest.raises(DimensionMismatch):
            value(log_spaced_objective(3, 10.0), [1.0, 2.0])


class TestEigenbasis:
    def test_minimizer_maps_to_origin(self, rng):
        obj = build_objective(random_spd(rng, 4), rng.standard_normal(4))
        np.testing.assert_allclose(to_eigenbasis(obj, obj.x_star), 0.0, atol=1e-15)

    def test_diagonal_is_signed_permutation(self):
        obj = build_objective(np.diag([5.0, 2.0, 9.0]), [1.0, 1.0, 1.0])
        xt = to_eigenbasis(obj, [2.0, 3.0, 4.0])
        np.testing.assert_allclose(np.sort(np.abs(xt)), [1.0, 2.0, 3.0])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=5))
    def test_round_trip_and_value(self, xs):
        obj = _ROTATED
        x = np.array(xs)
        xt = to_eigenbasis(obj, x)
        np.testing.assert_allclose(from_eigenbasis(obj, xt), x, atol=1e-10 * max(1.0, np.abs(x).max()))
        modal = 0.5 * float(np.sum(obj.eigenvalues * xt ** 2))
        assert value(obj, x) == pytest.approx(modal, rel=1e-10, abs=1e-12)


_ROTATED = build_objective(random_spd(np.random.default_rng(7), 5), np.arange(5.0))


class TestMatrixFile:
    def test_round_trip(self, tmp_path, rng):
        obj = build_objective(random_spd(rng, 3), rng.standard_normal(3))
        path = tmp_path / "a.txt"
        write_matrix_file(path, obj)
        back = read_matrix_file(path)
        np.testing.assert_array_equal(back.A, obj.A)
        np.testing.assert_array_equal(back.x_star, obj.x_star)

    @pytest.mark.parametrize("text", ["", "x\n", "2\n1 0\n0 1\n", "2\n1 0\n0 1\n0\n", "2\n1 a\n0 1\n0 0\n"])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        with pytest.raises(ValidationError):
            read_matrix_file(path)
