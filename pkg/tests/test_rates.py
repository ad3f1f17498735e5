import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reluforge import rates as rt


class TestCoveringBound:
    def test_example(self):
        assert rt.covering_bound(2, 2, 7, 1, 0.5) == pytest.approx(28 * math.log(3) + 7 * math.log(4))
        assert rt.covering_bound(2, 2, 7, 1, 0.5) == pytest.approx(40.47, abs=5e-3)

    def test_linear_in_P(self):
        assert rt.covering_bound(3, 5, 20, 2, 0.1) == pytest.approx(2 * rt.covering_bound(3, 5, 10, 2, 0.1))

    def test_small_weights(self):
        assert rt.covering_bound(2, 2, 7, 0.3, 0.5) == rt.covering_bound(2, 2, 7, 1.0, 0.5)

    @pytest.mark.parametrize("args", [(0, 2, 7, 1, 0.5), (2, 2, 7, 1, 0.0), (2, 2, 7, 1, 1.5), (2, -1, 7, 1, 0.5)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            rt.covering_bound(*args)


class TestSchedule:
    def test_eps_value(self):
        s = rt.schedule("model1", "regression", 1e6, 1.0, 1, 10)
        assert s.eps_N == pytest.approx(math.log(1e6) ** (5 / 3) * 1e-2)
        assert s.eps_N == pytest.approx(0.795, abs=5e-4)

    @pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
    @pytest.mark.parametrize("d", [0, 1, 2, 5])
    def test_regression_exponent(self, alpha, d):
        s = rt.schedule("model1", "regression", 1e5, alpha, d, 10)
        assert abs(s.risk_exponent - 2 * alpha / (2 * alpha + d)) <= 1e-12

    @pytest.mark.parametrize("alpha, d, beta", [(1.0, 1, 1.0), (0.5, 2, 3.0), (0.3, 4, 0.5)])
    def test_classification_exponent(self, alpha, d, beta):
        s = rt.schedule("model1", "classification", 1e5, alpha, d, 10, beta)
        assert abs(s.risk_exponent - alpha * (beta + 1) / (alpha * (beta + 2) + d)) <= 1e-12

    @pytest.mark.parametrize("alpha, d", [(1.0, 0), (0.5, 1), (0.5, 4), (1.0, 3)])
    def test_model2_exponents(self, alpha, d):
        m = max(1.0, alpha * d)
        reg = rt.schedule("model2", "regression", 1e5, alpha, d, 10)
        cls = rt.schedule("model2", "classification", 1e5, alpha, d, 10, 2.0)
        assert abs(reg.risk_exponent - 2 * alpha / (2 * alpha + m)) <= 1e-12
        assert abs(cls.risk_exponent - alpha * 3.0 / (alpha * 4.0 + m)) <= 1e-12
        assert reg.B_N == 1.0

    def test_model2_classification_small_dim(self):
        s = rt.schedule("model2", "classification", 1e5, 0.5, 1, 10, 2.0)
        assert s.risk_exponent == pytest.approx(0.5 * 3 / (0.5 * 4 + 1), abs=1e-12)

    def test_regression_against_classical_form(self):
        # 2 alpha / (2 alpha + d) equals 1 / (1 + d / (2 alpha))
        for alpha in (0.2, 0.7, 1.0):
            for d in (1, 3, 8):
                e = rt.exponents("model1", "regression", alpha, d)
                assert abs(e["risk_exp"] - 1 / (1 + d / (2 * alpha))) <= 1e-12

    def test_monotone_in_N(self):
        for model in rt.MODELS:
            eps = [rt.schedule(model, "regression", N, 0.5, 2, 10).eps_N for N in np.geomspace(1e3, 1e12, 40)]
            assert all(b < a for a, b in zip(eps, eps[1:]))

    def test_beta_limit(self):
        vals = [rt.exponents("model1", "classification", 0.5, 2, b)["risk_exp"] for b in (0.5, 1, 4, 16, 256, 1e6)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert rt.exponents("model1", "classification", 0.5, 2, math.inf)["risk_exp"] == 1.0
        assert vals[-1] == pytest.approx(1.0, abs=1e-5)

    def test_positive_fields(self):
        s = rt.schedule("model1", "classification", 1e4, 0.5, 2, 20, 1.0)
        assert all(getattr(s, k) > 0 for k in ("eps_N", "L_N", "W_N", "P_N", "B_N", "predicted_risk"))
        assert s.as_dict()["model"] == "model1"

    def test_errors(self):
        with pytest.raises(ValueError):
            rt.schedule("model1", "classification", 1e4, 1.0, 1, 10)
        with pytest.raises(ValueError):
            rt.schedule("model3", "regression", 1e4, 1.0, 1, 10)
        with pytest.raises(ValueError):
            rt.schedule("model1", "regression", 1.0, 1.0, 1, 10)
        with pytest.raises(ValueError):
            rt.schedule("model1", "regression", 1e4, 1.5, 1, 10)


class TestGrid:
    def test_decades(self):
        assert rt.parse_grid("1e3:1e7") == [1e3, 1e4, 1e5, 1e6, 1e7]

    def test_list(self):
        assert rt.parse_grid("1,2.5, 4") == [1.0, 2.5, 4.0]

    def test_single(self):
        assert rt.parse_grid("5:5") == [5.0]

    def test_bad(self):
        with pytest.raises(ValueError):
            rt.parse_grid("10:1")


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.05, 1.0), d=st.floats(0.0, 10.0), beta=st.floats(0.1, 50.0))
def test_exponent_identities(alpha, d, beta):
    reg = rt.exponents("model1", "regression", alpha, d)
    cls = rt.exponents("model1", "classification", alpha, d, beta)
    assert abs(reg["risk_exp"] - 2 * alpha / (2 * alpha + d)) <= 1e-12
    assert abs(cls["risk_exp"] - alpha * (beta + 1) / (alpha * (beta + 2) + d)) <= 1e-12
    assert abs(reg["risk_exp"] - 2 * alpha * reg["eps_exp"]) <= 1e-12
