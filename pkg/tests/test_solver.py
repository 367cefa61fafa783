import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrpredict.errors import ConvergenceError, ParameterError, SingularDesignError
from qrpredict.solver import (
    add_intercept,
    check_loss,
    fit_ols,
    fit_quantile,
    fit_quantile_lp,
    quantile_score,
)

taus = st.floats(0.02, 0.98)


def random_problem(rng, T, p, heavy=False):
    X = add_intercept(rng.standard_normal((T, p - 1))) if p > 1 else np.ones((T, 1))
    e = rng.standard_t(2, T) if heavy else rng.standard_normal(T)
    return X, X @ rng.standard_normal(p) + e


class TestCheckLoss:
    @pytest.mark.parametrize("u, tau, expected", [(0.0, 0.5, 0.0), (2.0, 0.5, 1.0), (-1.0, 0.25, 0.75)])
    def test_values(self, u, tau, expected):
        assert check_loss(u, tau) == pytest.approx(expected)

    @given(u=st.floats(-1e6, 1e6), tau=taus)
    def test_complementary_levels_sum_to_abs(self, u, tau):
        assert check_loss(u, tau) + check_loss(u, 1 - tau) == pytest.approx(abs(u), rel=1e-12, abs=1e-12)

    @given(u=st.floats(-1e6, 1e6), tau=taus)
    def test_reflection(self, u, tau):
        assert check_loss(-u, tau) == pytest.approx(check_loss(u, 1 - tau), rel=1e-12, abs=1e-12)

    @given(u=st.floats(-1e6, 1e6), tau=taus)
    def test_nonnegative(self, u, tau):
        assert check_loss(u, tau) >= 0

    def test_vectorized(self):
        out = check_loss(np.array([-2.0, 0.0, 3.0]), 0.1)
        np.testing.assert_allclose(out, [1.8, 0.0, 0.3])

    def test_score(self):
        np.testing.assert_allclose(quantile_score(np.array([-1.0, 0.0, 1.0]), 0.3), [-0.7, 0.3, 0.3])

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, np.nan])
    def test_rejects_bad_level(self, tau):
        with pytest.raises(ParameterError):
            check_loss(1.0, tau)


class TestAddIntercept:
    def test_stacks_blocks(self):
        X = add_intercept(np.arange(3.0), np.ones((3, 2)))
        assert X.shape == (3, 4)
        np.testing.assert_array_equal(X[:, 0], 1.0)

    def test_empty_block_needs_n(self):
        assert add_intercept(np.empty((4, 0)), n=4).shape == (4, 1)
        with pytest.raises(ParameterError):
            add_intercept()


class TestFitQuantile:
    def test_median_of_five(self):
        fit = fit_quantile(np.ones((5, 1)), np.arange(1.0, 6.0), 0.5)
        assert fit.coefficients[0] == pytest.approx(3.0, abs=1e-10)

    @pytest.mark.parametrize("tau", [0.1, 0.3, 0.5, 0.9])
    def test_constant_is_optimal(self, tau):
        y = np.arange(1.0, 6.0)
        fit = fit_quantile(np.ones((5, 1)), y, tau)
        for c in np.linspace(0, 6, 61):
            assert fit.objective <= check_loss(y - c, tau).sum() + 1e-10

    def test_matches_lp_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            T, p = int(rng.integers(5, 51)), int(rng.integers(1, 4))
            X, y = random_problem(rng, T, p, heavy=True)
            tau = float(rng.uniform(0.05, 0.95))
            assert fit_quantile(X, y, tau).objective == pytest.approx(
                fit_quantile_lp(X, y, tau).objective, rel=1e-6, abs=1e-9
            )

    def test_large_problem_reaches_vertex(self):
        rng = np.random.default_rng(3)
        X, y = random_problem(rng, 750, 10)
        fit = fit_quantile(X, y, 0.25)
        ref = fit_quantile_lp(X, y, 0.25)
        assert fit.vertex
        assert fit.objective == pytest.approx(ref.objective, rel=1e-9)
        # an exact vertex interpolates p observations
        assert np.sum(fit.residuals == 0.0) >= X.shape[1]

    def test_residuals_and_objective_agree(self):
        rng = np.random.default_rng(4)
        X, y = random_problem(rng, 200, 3)
        fit = fit_quantile(X, y, 0.7)
        np.testing.assert_allclose(fit.residuals, y - X @ fit.coefficients, atol=1e-10)
        assert fit.objective == pytest.approx(check_loss(fit.residuals, 0.7).sum(), rel=1e-12)

    def test_subgradient_condition(self):
        rng = np.random.default_rng(5)
        X, y = random_problem(rng, 300, 4)
        tau = 0.35
        fit = fit_quantile(X, y, tau)
        r = fit.residuals
        active = np.abs(r) <= 1e-9 * np.abs(y).max()
        psi = quantile_score(r, tau)
        lhs = np.abs(X[~active].T @ psi[~active])
        rhs = np.abs(X[active]).sum(axis=0)
        assert np.all(lhs <= rhs + 1e-8)

    def test_perturbation_never_improves(self):
        rng = np.random.default_rng(6)
        X, y = random_problem(rng, 150, 3)
        fit = fit_quantile(X, y, 0.6)
        for j in range(X.shape[1]):
            eps = 1e-4 * max(1.0, abs(fit.coefficients[j]))
            for s in (-1, 1):
                b = fit.coefficients.copy()
                b[j] += s * eps
                assert check_loss(y - X @ b, 0.6).sum() >= fit.objective - 1e-8

    def test_ties_compare_objectives(self):
        # even sample: any point between the middle order statistics is a median
        y = np.array([1.0, 2.0, 3.0, 4.0])
        fit = fit_quantile(np.ones((4, 1)), y, 0.5)
        assert 2.0 - 1e-9 <= fit.coefficients[0] <= 3.0 + 1e-9
        assert fit.objective == pytest.approx(2.0)

    def test_perfect_fit(self):
        X = add_intercept(np.arange(10.0))
        fit = fit_quantile(X, 2 + 3 * np.arange(10.0), 0.4)
        np.testing.assert_allclose(fit.coefficients, [2, 3], atol=1e-9)
        assert fit.objective == pytest.approx(0.0, abs=1e-9)

    def test_singular_design(self):
        x = np.arange(10.0)
        with pytest.raises(SingularDesignError):
            fit_quantile(np.column_stack([np.ones(10), x, 2 * x]), x, 0.5)

    def test_more_columns_than_rows(self):
        with pytest.raises(ParameterError):
            fit_quantile(np.ones((2, 3)), np.ones(2), 0.5)

    def test_iteration_cap_carries_best(self):
        rng = np.random.default_rng(8)
        X, y = random_problem(rng, 300, 4)
        with pytest.raises(ConvergenceError) as info:
            fit_quantile(X, y, 0.5, max_iter=1, purify=False)
        assert info.value.best is not None
        assert np.all(np.isfinite(info.value.best.coefficients))

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            fit_quantile(np.ones((5, 1)), np.ones(4), 0.5)

    def test_nonfinite_input(self):
        y = np.ones(5)
        y[2] = np.nan
        with pytest.raises(ParameterError):
            fit_quantile(np.ones((5, 1)), y, 0.5)

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        X, y = random_problem(rng, 120, 3)
        a, b = fit_quantile(X, y, 0.2), fit_quantile(X, y, 0.2)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), T=st.integers(8, 50), p=st.integers(1, 3), tau=taus)
    def test_property_lp_agreement(self, seed, T, p, tau):
        X, y = random_problem(np.random.default_rng(seed), T, p, heavy=True)
        assert fit_quantile(X, y, tau).objective == pytest.approx(
            fit_quantile_lp(X, y, tau).objective, rel=1e-6, abs=1e-9
        )

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), tau=taus, shift=st.floats(-5, 5))
    def test_property_location_equivariance(self, seed, tau, shift):
        X, y = random_problem(np.random.default_rng(seed), 60, 2)
        a = fit_quantile(X, y, tau)
        b = fit_quantile(X, y + shift, tau)
        assert b.objective == pytest.approx(a.objective, rel=1e-7, abs=1e-8)


class TestFitOls:
    def test_mean_case(self):
        fit = fit_ols(np.ones((3, 1)), np.array([2.0, 4.0, 6.0]))
        assert fit.coefficients[0] == pytest.approx(4.0)
        np.testing.assert_allclose(fit.residuals, [-2, 0, 2], atol=1e-12)

    def test_exact_fit(self):
        X = add_intercept(np.arange(6.0))
        fit = fit_ols(X, X @ np.array([1.0, -2.0]))
        np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-12)

    def test_normal_equation_oracle(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((10, 2))
        y = rng.standard_normal(10)
        ref = np.linalg.solve(X.T @ X, X.T @ y)
        np.testing.assert_allclose(fit_ols(X, y).coefficients, ref, atol=1e-10)

    def test_matrix_response(self):
        rng = np.random.default_rng(12)
        X = add_intercept(rng.standard_normal((40, 2)))
        Y = rng.standard_normal((40, 3))
        fit = fit_ols(X, Y)
        assert fit.coefficients.shape == (3, 3)
        for j in range(3):
            np.testing.assert_allclose(fit.coefficients[:, j], fit_ols(X, Y[:, j]).coefficients, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), T=st.integers(6, 200), p=st.integers(1, 5))
    def test_property_orthogonality(self, seed, T, p):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((T, p)) * rng.uniform(0.1, 100, p)
        y = rng.standard_normal(T) * 50
        fit = fit_ols(X, y)
        r = fit.residuals
        for j in range(p):
            assert abs(X[:, j] @ r) <= 1e-8 * np.linalg.norm(X[:, j]) * max(np.linalg.norm(r), 1e-300) + 1e-12

    def test_collinear(self):
        x = np.arange(5.0)
        with pytest.raises(SingularDesignError):
            fit_ols(np.column_stack([x, x]), x)
