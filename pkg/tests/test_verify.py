import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.random import default_rng

from reluforge import calibration as cal
from reluforge import geometry as geo
from reluforge import pou
from reluforge import verify as vf
from reluforge.network import affine_net
from reluforge.primitives import min_net, sign_net, square_net


class TestSupError:
    def test_exact_rendering(self):
        res = vf.sup_error(min_net(3), lambda X: X.min(axis=1), vf.BoxSampler(3, -1, 1), 1000)
        assert res.estimate == 0.0
        assert res.sample_count == 1000 + 8

    def test_constant_offset(self):
        net = affine_net([[1.0, -2.0]], [0.1])
        res = vf.sup_error(net, lambda X: X[:, 0] - 2 * X[:, 1], vf.BoxSampler(2), 500)
        assert res.estimate == pytest.approx(0.1, abs=1e-14)

    def test_square(self):
        res = vf.sup_error(square_net(1e-3), lambda X: X[:, 0] ** 2, vf.GridSampler(), 100_001)
        assert 0 < res.estimate <= 1e-3
        assert abs(res.argmax[0] ** 2 - float(square_net(1e-3)(res.argmax)[0])) == pytest.approx(res.estimate)

    def test_special_points_are_used(self):
        # the deviation is a spike at x = 0.123 only
        net = affine_net([[0.0]], [0.0])

        def ref(X):
            return np.where(X[:, 0] == 0.123, 1.0, 0.0)

        assert vf.sup_error(net, ref, vf.GridSampler(), 11).estimate == 0.0
        assert vf.sup_error(net, ref, vf.GridSampler(), 11, special=[[0.123]]).estimate == 1.0

    def test_l1_norm(self):
        net = affine_net(np.eye(2), [0.1, -0.2])
        res = vf.sup_error(net, lambda X: X, vf.BoxSampler(2), 64, norm="l1")
        assert res.estimate == pytest.approx(0.3)

    def test_reproducible_and_chunk_independent(self):
        net = square_net(1e-2)
        s = vf.MappedSampler(1, lambda U: U ** 2)
        a = vf.sup_error(net, lambda X: X[:, 0] ** 2, s, 5000, seed=3)
        b = vf.sup_error(net, lambda X: X[:, 0] ** 2, s, 5000, seed=3, chunk=317, jobs=2)
        assert a.estimate == b.estimate
        np.testing.assert_array_equal(a.argmax, b.argmax)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            vf.sup_error(min_net(2), lambda X: X.min(axis=1), vf.BoxSampler(3), 10)

    def test_tube_sampler(self, small_circle):
        s = vf.TubeSampler(small_circle, 0.3)
        X = s.points(100, 0)
        assert s.dim == 3 and np.all(geo.in_tube(small_circle, X, 0.3))


class TestAudit:
    def test_min_exact(self):
        rows = vf.dimension_audit(min_net(8), {"P": 11 * 8 * 3, "L": 6}, name="min")
        assert [r.passed for r in rows] == [True, True]
        assert rows[0].bound == 264 and rows[0].check == "min.nonzero_params"

    def test_sign_exact(self):
        rows = vf.dimension_audit(sign_net(0.1), {"L": 2, "W": 2, "P": 7, "B": 10.0})
        assert all(r.passed and r.value == r.bound for r in rows[:3])
        assert rows[3].value == pytest.approx(10.0)

    def test_frozen_constant(self):
        consts = {"square_depth": 1.5}
        net = square_net(1e-3)
        rows = vf.dimension_audit(net, {"L": ("square_depth", math.log2(1e3))}, constants=consts)
        assert rows[0].bound == pytest.approx(vf.HEADROOM * 1.5 * math.log2(1e3))
        assert rows[0].passed

    def test_failure(self):
        rows = vf.dimension_audit(min_net(8), {"depth": 1})
        assert not rows[0].passed

    def test_unknown_metric(self):
        with pytest.raises(KeyError):
            vf.dimension_audit(min_net(2), {"Q": 1})

    def test_missing_constant(self):
        with pytest.raises(KeyError):
            vf.dimension_audit(min_net(2), {"L": ("nope", 1.0)}, constants={})


class TestFrozenConstants:
    def test_registry_covers_audits(self):
        consts = vf.load_constants()
        for key in ("square_depth", "reciprocal_depth", "eta_depth", "model1_depth", "model2_depth", "rates_balance"):
            assert consts[key] > 0

    def test_cheap_ratios_within_frozen(self):
        consts = vf.load_constants()
        assert max(cal.square_depth_ratio(e) for e in cal.SQUARE_EPS) <= consts["square_depth"]
        assert max(cal.reciprocal_depth_ratio(a, e) for a, e in cal.RECIPROCAL_GRID) <= consts["reciprocal_depth"]
        worst = max(cal.balance_ratio(al, d, D, N) for al, d, D in cal.BALANCE_GRID for N in cal.BALANCE_N)
        assert worst <= consts["rates_balance"]


class TestKinkPoints:
    def test_inside_tube_and_centered_on_kinks(self):
        M = cal.acceptance_circle()
        X = cal.kink_points(M, 0.3, 0.01, n=11)
        assert X.shape == (66, 3) and np.all(geo.in_tube(M, X, 0.3))
        Y = M.to_canonical(X)
        # the middle angle of each window sits exactly on a kink (y_1 = 0)
        np.testing.assert_allclose(Y[[5, 16], 1], 0.0, atol=1e-15)
        g, _ = cal.kink_g(M)
        assert g(geo.project(M, X)).min() == pytest.approx(0.5)


class TestRateFit:
    def test_power_law(self):
        x = np.geomspace(0.01, 1, 7)
        fit = vf.rate_fit(np.column_stack([x, 7 * x**-2]))
        assert abs(fit.slope + 2) <= 1e-10 and abs(fit.r2 - 1) <= 1e-12
        assert fit.intercept == pytest.approx(math.log(7))

    def test_constant(self):
        fit = vf.rate_fit([(1, 3), (2, 3), (4, 3)])
        assert fit.slope == 0.0 and fit.r2 == 1.0

    @pytest.mark.parametrize("pairs", [[(1, 1), (2, 2)], [(1, 1), (2, -2), (3, 3)], [(1, 1), (1, 2), (1, 3)]])
    def test_invalid(self, pairs):
        with pytest.raises(ValueError):
            vf.rate_fit(pairs)


class TestGeometricChecks:
    def test_lipschitz_on_manifold(self, unit_circle_r3):
        res = vf.lipschitz_check(unit_circle_r3, 0.0, 2000)
        assert res.passed and res.measured["max_ratio"] <= 1 + 1e-8

    def test_lipschitz_half(self, unit_circle_r3):
        res = vf.lipschitz_check(unit_circle_r3, 0.5, 2000)
        assert res.passed and res.measured["max_ratio"] <= 2 + 1e-8

    def test_lipschitz_grows_with_q(self, sphere_r5):
        ratios = [vf.lipschitz_check(sphere_r5, q, 2000, seed=1).measured["max_ratio"] for q in (0.2, 0.5, 0.8)]
        assert ratios[0] < ratios[1] < ratios[2]

    def test_metric_equivalence(self, unit_circle_r3):
        res = vf.metric_equivalence_check(unit_circle_r3, 0.3, 0.65, 2000)
        assert res.passed and res.violations == 0
        assert res.measured["min_upper_margin"] >= 0 and res.measured["min_lower_margin"] >= 0

    def test_metric_equivalence_range(self, unit_circle_r3):
        with pytest.raises(ValueError):
            vf.metric_equivalence_check(unit_circle_r3, 0.5, 0.3, 100)

    def test_pou_check(self, unit_circle_r3):
        spec = pou.make_pou(unit_circle_r3, 0.3, 0.05, strict=False)
        res = vf.pou_check(spec, 2000)
        assert res.passed
        assert res.measured["max_sum_error"] <= 1e-12
        assert res.measured["min_l1"] >= (1 - 0.3) / 8

    def test_pou_localization_formula(self, unit_circle_r3):
        spec = pou.make_pou(unit_circle_r3, 0.0, 0.01, strict=False)
        assert vf.pou_check(spec, 200).measured["localization_radius"] == pytest.approx(0.72)


class TestReport:
    @pytest.fixture
    def report(self):
        rep = vf.VerificationReport(seed=4)
        rep.add_sup(vf.SupError(0.001, np.array([0.5]), 10), 0.01)
        rep.dimension_audit = vf.dimension_audit(min_net(8), {"P": 264}, name="min")
        rep.property_results = [vf.PropertyResult("lipschitz", True, 10, 0, {"max_ratio": 1.5})]
        rep.rate_fit = vf.RateFit(-1.1, 0.3, 0.99)
        rep.rate_fit_target = (-1.0, 0.3)
        return rep

    def test_rows(self, report):
        names = [r[0] for r in report.rows()]
        assert names == ["sup_error", "min.nonzero_params", "lipschitz", "rate_fit_slope"]
        assert report.passed and report.failures() == []

    def test_failure_names(self, report):
        report.rate_fit = vf.RateFit(-2.0, 0.0, 1.0)
        assert report.failures() == ["rate_fit_slope"]

    def test_json(self, report):
        doc = json.loads(report.to_json())
        assert doc["seed"] == 4 and doc["passed"] is True
        assert doc["dimension_audit"][0]["bound"] == 264.0
        assert report.to_json() == report.to_json()

    def test_csv(self, report):
        rows = list(csv.reader(io.StringIO(report.to_csv())))
        assert rows[0] == ["check", "value", "bound", "pass"]
        assert len(rows) == 5 and all(r[3] == "true" for r in rows[1:])


@settings(max_examples=40, deadline=None)
@given(
    slope=st.floats(-5, 5),
    scale=st.floats(0.01, 100),
    n=st.integers(3, 12),
)
def test_rate_fit_recovers_power_laws(slope, scale, n):
    x = np.geomspace(1e-3, 1e3, n)
    fit = vf.rate_fit(np.column_stack([x, scale * x**slope]))
    assert abs(fit.slope - slope) <= 1e-10


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000))
def test_sup_error_never_exceeds_true_sup(seed):
    rng = default_rng(seed)
    c = rng.uniform(-1, 1, 2)
    net = affine_net([c], [0.0])
    # reference differs by |x_0| exactly; the true sup over [0,1]^2 is 1
    res = vf.sup_error(net, lambda X: X @ c + X[:, 0], vf.BoxSampler(2), 256, seed=seed)
    assert res.estimate <= 1.0 + 1e-12 and res.estimate == pytest.approx(1.0)
