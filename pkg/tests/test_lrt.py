import math

import numpy as np
import pytest

from conelrt import conic, geometry as geo, lrt
from conelrt.special import norm_cdf, norm_pdf


def test_lrs_full_space_is_squared_distance():
    cs = geo.subspace(np.eye(4))
    null = lrt.point_null(np.array([1.0, 0.0, -1.0, 2.0]))
    y = np.array([2.0, 1.0, 0.0, 0.0])
    assert lrt.lrs(cs, null, y) == pytest.approx(np.sum((y - null.mu0) ** 2))


def test_lrs_orthant_point_null():
    cs = geo.orthant(2)
    null = lrt.point_null(np.zeros(2))
    assert lrt.lrs(cs, null, np.array([1.0, -2.0])) == pytest.approx(1.0)


def test_lrs_monotone_subspace_null():
    cs = geo.monotone(2)
    null = lrt.subspace_null(geo.span_of([np.ones(2)]))
    assert lrt.lrs(cs, null, np.array([1.0, 2.0])) == pytest.approx(0.5)


def test_lrs_nonnegative_for_point_null():
    rng = np.random.default_rng(0)
    cs = geo.monotone(8)
    null = lrt.point_null(np.sort(rng.standard_normal(8)))
    for _ in range(20):
        assert lrt.lrs(cs, null, rng.standard_normal(8) * 2) >= -1e-10


def test_null_validation():
    cs = geo.orthant(3)
    with pytest.raises(ValueError):
        lrt.validate_null(cs, lrt.point_null(np.array([1.0, -1.0, 0.0])))
    lrt.validate_null(cs, lrt.point_null(np.array([1.0, 0.0, 2.0])))
    with pytest.raises(ValueError):
        lrt.subspace_null(geo.orthant(3))


def test_calibrate_closed_form_subspace():
    cs = geo.poly_subspace(80, 49)      # 50-dimensional subspace
    cal = lrt.calibrate_null(cs, lrt.point_null(np.zeros(80)), mode=lrt.CLOSED_FORM)
    assert cal.m_hat == 50.0
    assert cal.sigma_hat == pytest.approx(10.0)
    assert cal.mode == lrt.CLOSED_FORM


def test_calibrate_monte_carlo_orthant():
    cs = geo.orthant(4)
    cal = lrt.calibrate_null(cs, lrt.point_null(np.zeros(4)), reps=60000, seed=5)
    assert cal.m_hat == pytest.approx(2.0, abs=0.05)
    assert cal.sigma_hat == pytest.approx(math.sqrt(5.0), abs=0.05)


def test_calibrate_subspace_null_matches_dimension_drop():
    cs = geo.monotone(40)
    null = lrt.subspace_null(geo.poly_subspace(40, 0))
    cal = lrt.calibrate_null(cs, null, reps=20000, seed=7)
    summary = conic.estimate_conic_summary(geo.monotone(40), 20000, 11)
    drop = summary.delta_hat - 1.0
    assert cal.m_hat == pytest.approx(drop, abs=4 * (summary.delta_se + 0.05))


def test_calibrate_validates():
    cs = geo.orthant(4)
    with pytest.raises(ValueError):
        lrt.calibrate_null(cs, lrt.point_null(np.zeros(4)), reps=100)
    with pytest.raises(ValueError):
        lrt.calibrate_null(cs, lrt.point_null(np.zeros(4)), mode=lrt.CLOSED_FORM)


def _plan(m=10.0, sigma=2.0, alpha=0.05, sided=lrt.TWO_SIDED):
    cal = lrt.NullCalibration(m_hat=m, sigma_hat=sigma, reps=0, seed=0, mode="test")
    return lrt.TestPlan(sidedness=sided, alpha=alpha, calibration=cal)


def test_decide_examples():
    one = _plan(sided=lrt.ONE_SIDED)
    two = _plan(sided=lrt.TWO_SIDED)
    assert not lrt.decide(10.0, one) and not lrt.decide(10.0, two)
    assert lrt.decide(10.0 + 10 * 2.0, one) and lrt.decide(10.0 + 10 * 2.0, two)
    t = 10.0 - 3 * 2.0
    assert not lrt.decide(t, one)
    assert lrt.decide(t, two)


def test_plan_validation():
    with pytest.raises(ValueError):
        _plan(alpha=1.5)
    with pytest.raises(ValueError):
        _plan(sigma=-1.0)
    with pytest.raises(ValueError):
        lrt.TestPlan(sidedness="three-sided", alpha=0.05,
                     calibration=lrt.NullCalibration(0, 1, 0, 0, "test"))


def test_delta_power_values():
    assert lrt.delta_power(lrt.ONE_SIDED, 0.05, 0.0) == pytest.approx(0.05, abs=1e-12)
    assert lrt.delta_power(lrt.TWO_SIDED, 0.05, 0.0) == pytest.approx(0.05, abs=1e-12)
    assert lrt.delta_power(lrt.TWO_SIDED, 0.31, math.inf) == 1.0
    assert lrt.delta_power(lrt.TWO_SIDED, 0.31, -math.inf) == 1.0
    assert lrt.delta_power(lrt.ONE_SIDED, 0.05, math.inf) == 1.0
    assert lrt.delta_power(lrt.ONE_SIDED, 0.05, -math.inf) == 0.0
    assert lrt.delta_power(lrt.ONE_SIDED, 0.05, 1.6448536269514722) == pytest.approx(0.5, abs=1e-10)


def test_delta_power_shapes():
    ws = np.linspace(-6, 6, 121)
    one = [lrt.delta_power(lrt.ONE_SIDED, 0.05, w) for w in ws]
    assert all(b >= a - 1e-12 for a, b in zip(one, one[1:]))
    two = [lrt.delta_power(lrt.TWO_SIDED, 0.05, w) for w in ws]
    mid = len(ws) // 2
    assert all(b <= a + 1e-12 for a, b in zip(two[:mid + 1], two[1:mid + 1]))
    assert all(b >= a - 1e-12 for a, b in zip(two[mid:], two[mid + 1:]))
    assert min(two) == pytest.approx(0.05, abs=1e-12)


def test_orthant_closed_forms_basics():
    sbar0, q0 = lrt.orthant_closed_forms(0.0)
    assert sbar0 == 0.0 and q0 == 0.5
    xs = np.linspace(0, 6, 200)
    sbar, q = lrt.orthant_closed_forms(xs)
    np.testing.assert_allclose(q - sbar, 0.5, atol=1e-15)
    assert np.all(np.diff(sbar) >= 0)
    assert np.all(np.diff(sbar, 2) <= 1e-12)      # concave on the grid
    sbar8, _ = lrt.orthant_closed_forms(8.0)
    assert sbar8 == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ValueError):
        lrt.orthant_closed_forms(-0.1)


def test_counterexample_gap_function():
    assert lrt.counter_f(0.0) == pytest.approx(0.5753, abs=1e-3)
    assert lrt.counter_f(1.0) == pytest.approx(0.0, abs=1e-12)
    h = 1e-6
    fprime = (lrt.counter_f(1 + h) - lrt.counter_f(1 - h)) / (2 * h)
    assert fprime == pytest.approx(0.1666, abs=1e-3)
    c0 = lrt.find_c0()
    assert 0.0 < c0 < 1.0
    assert abs(lrt.counter_f(c0)) < 1e-12


def test_predict_power_at_null_is_alpha():
    cs = geo.orthant(30)
    null = lrt.point_null(np.zeros(30))
    cal = lrt.calibrate_null(cs, null, reps=4000, seed=3)
    plan = lrt.TestPlan(lrt.TWO_SIDED, 0.05, cal)
    pred = lrt.predict_power(cs, null, np.zeros(30), plan, 1000, 5)
    assert pred.shift_w == 0.0
    assert pred.predicted_power == pytest.approx(0.05, abs=1e-12)
    assert pred.ell_term == 0.0


def test_predict_power_tracks_empirical_far_from_null():
    cs = geo.orthant(400)
    null = lrt.point_null(np.zeros(400))
    cal = lrt.calibrate_null(cs, null, reps=8000, seed=3)
    plan = lrt.TestPlan(lrt.TWO_SIDED, 0.05, cal)
    mu = np.full(400, 0.25)
    pred = lrt.predict_power(cs, null, mu, plan, 4000, 7)
    emp, se = lrt.empirical_power(cs, null, mu, plan, 4000, 11)
    assert abs(pred.predicted_power - emp) <= 0.08
    assert pred.shift_w > 0


def test_quadratic_lower_bound_for_cone_shifts():
    """Shifted moment gaps dominate the squared shift for cone members."""
    rng = np.random.default_rng(8)
    for cs in (geo.orthant(15), geo.monotone(15)):
        for _ in range(3):
            nu = geo.project(cs, rng.standard_normal(15) * 2).point
            g = conic.estimate_gamma(cs, nu, 2, 4000, 17)
            assert g.value + 3 * g.se >= float(nu @ nu) - 1e-9
            assert not g.quad_bound_violated


def test_separation_check_orthant():
    n = 50
    summary = conic.estimate_conic_summary(geo.orthant(n), 20000, 31)
    mu = np.full(n, 1.0)
    chk = lrt.wwg_separation_check(geo.orthant(n), geo.zero_point(n), mu, summary)
    assert chk.lhs == pytest.approx(math.sqrt(n))
    # the orthant infimum sits at a coordinate direction: E(xi)_+ = phi(0)
    assert chk.denominator == pytest.approx(float(norm_pdf(0.0)), abs=0.03)
    expected_rhs = min(summary.delta_hat ** 0.25,
                       math.sqrt(summary.delta_hat) / chk.denominator)
    assert chk.rhs == pytest.approx(expected_rhs, rel=1e-12)
    assert chk.satisfied


def test_separation_check_subspace_mean_projection_vanishes():
    rng = np.random.default_rng(41)
    q, _ = np.linalg.qr(rng.standard_normal((30, 6)))
    cs = geo.subspace(q)
    summary = conic.estimate_conic_summary(cs, 5000, 43)
    mu = q[:, 0] * 10.0
    chk = lrt.wwg_separation_check(cs, geo.subspace(q[:, 1:2]), mu, summary)
    assert chk.rhs == pytest.approx(summary.delta_hat ** 0.25, rel=1e-12)


def test_separation_check_circular_uses_boundary_ray():
    n, angle = 40, math.pi / 5
    cs = geo.circular(n, angle)
    summary = conic.estimate_conic_summary(cs, 20000, 45)
    v = summary.mean_proj
    expected = v[0] * math.cos(angle) - np.linalg.norm(v[1:]) * math.sin(angle)
    mu = np.zeros(n)
    mu[0] = 9.0
    chk = lrt.wwg_separation_check(cs, geo.zero_point(n), mu, summary)
    assert chk.denominator == pytest.approx(max(0.0, expected), abs=1e-12)
    assert chk.satisfied


def test_separation_check_sampled_fallback_for_monotone():
    n = 25
    summary = conic.estimate_conic_summary(geo.monotone(n), 4000, 46)
    mu = np.linspace(-3, 3, n)
    chk = lrt.wwg_separation_check(geo.monotone(n), geo.span_of([np.ones(n)]),
                                   mu, summary)
    # sampled minimization reports an upper bound on the infimum, so rhs is
    # at most the unconstrained branch
    assert chk.rhs <= summary.delta_hat ** 0.25 + 1e-12
    assert chk.lhs > 0


def test_separation_check_null_point_never_satisfied():
    n = 20
    summary = conic.estimate_conic_summary(geo.monotone(n), 2000, 47)
    k0 = geo.span_of([np.ones(n)])
    mu = np.full(n, 3.3)
    chk = lrt.wwg_separation_check(geo.monotone(n), k0, mu, summary)
    assert chk.lhs == pytest.approx(0.0, abs=1e-9)
    assert not chk.satisfied


def test_size_control_subspace_closed_form():
    rng = np.random.default_rng(51)
    q, _ = np.linalg.qr(rng.standard_normal((60, 30)))
    cs = geo.subspace(q)
    null = lrt.point_null(np.zeros(60))
    cal = lrt.calibrate_null(cs, null, mode=lrt.CLOSED_FORM)
    plan = lrt.TestPlan(lrt.TWO_SIDED, 0.05, cal)
    p, se = lrt.empirical_power(cs, null, np.zeros(60), plan, 4000, 53)
    assert abs(p - 0.05) <= max(3 * se, 2 * 8 / math.sqrt(30))


def test_standardized_stats_shape_and_centering():
    cs = geo.orthant(64)
    null = lrt.point_null(np.zeros(64))
    cal = lrt.calibrate_null(cs, null, reps=4000, seed=3)
    s = lrt.standardized_stats(cs, null, np.zeros(64), cal, 4000, 3)
    assert s.shape == (4000,)
    assert abs(s.mean()) <= 3 / math.sqrt(4000) + 0.05
