import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrpredict.dgp import InnovationSpec, PersistenceSpec, gen_innovations, gen_predictors, rng_stream
from qrpredict.errors import ParameterError, SingularDesignError
from qrpredict.predictors import ar1_coefficient, construct_cp, construct_trend, trend_direct
from qrpredict.solver import add_intercept


class TestTrend:
    def test_single_term(self):
        out = construct_trend([5.0, 7.0], 0.9)
        assert np.isnan(out[0])
        assert out[1] == pytest.approx(0.45, rel=1e-14)

    def test_constant_series(self):
        c, w = 2.0, 0.9
        out = construct_trend(np.full(200, c), w)
        t = np.arange(1, 200)
        np.testing.assert_allclose(out[1:], c * w * (1 - w**t), rtol=1e-12)
        assert out[-1] == pytest.approx(c * w, rel=1e-8)

    def test_recursion_matches_direct_sum(self):
        s = rng_stream(1).standard_normal(500)
        fast, slow = construct_trend(s, 0.9), trend_direct(s, 0.9)
        np.testing.assert_allclose(fast[1:], slow[1:], atol=1e-12, rtol=0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31), w=st.floats(0.05, 0.95), T=st.integers(2, 120))
    def test_property_direct_sum(self, seed, w, T):
        s = np.random.default_rng(seed).uniform(-10, 10, T)
        np.testing.assert_allclose(construct_trend(s, w)[1:], trend_direct(s, w)[1:], atol=1e-11)

    @pytest.mark.parametrize("w", [0.0, 1.0, -0.2, 1.5])
    def test_bad_weight(self, w):
        with pytest.raises(ParameterError):
            construct_trend([1.0, 2.0], w)


class TestCp:
    def test_exact_fit(self):
        F = rng_stream(2).standard_normal((60, 5))
        rx = 0.3 + F @ np.array([1.0, -2.0, 0.5, 0.0, 3.0])
        cp = construct_cp(F, rx)
        np.testing.assert_allclose(cp.values, rx, atol=1e-10)
        np.testing.assert_allclose(cp.coefficients, [0.3, 1.0, -2.0, 0.5, 0.0, 3.0], atol=1e-10)

    def test_normal_equation_oracle(self):
        rng = rng_stream(3)
        F = rng.standard_normal((120, 5)).cumsum(axis=0) * 0.1 + 5
        rx = rng.standard_normal(120)
        X = add_intercept(F)
        ref = np.linalg.solve(X.T @ X, X.T @ rx)
        np.testing.assert_allclose(construct_cp(F, rx).coefficients, ref, atol=1e-10)

    def test_identical_forwards(self):
        f = rng_stream(4).standard_normal(50)
        with pytest.raises(SingularDesignError):
            construct_cp(np.column_stack([f] * 5), rng_stream(5).standard_normal(50))

    def test_misaligned(self):
        with pytest.raises(ParameterError):
            construct_cp(np.ones((10, 5)), np.ones(9))


class TestAr1:
    def test_unit_root(self):
        _, v = gen_innovations(InnovationSpec((0.0,)), 750, rng=rng_stream(6))
        x = gen_predictors(PersistenceSpec.strong(0.0), v)[:, 0]
        assert ar1_coefficient(x) == pytest.approx(1.0, abs=0.02)

    def test_exact_ar(self):
        x = 0.8 ** np.arange(30.0)
        assert ar1_coefficient(x) == pytest.approx(0.8, rel=1e-10)

    def test_too_short(self):
        with pytest.raises(ParameterError):
            ar1_coefficient([1.0, 2.0])
