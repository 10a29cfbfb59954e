"""Likelihood-ratio statistic, test calibration, decisions and power.

The statistic compares the squared distance of the observation to the null
(a point, or its projection onto a null subspace) with its squared distance
to the constraint set.  Tests standardize the statistic with simulated (or,
for subspaces, exact) null moments and threshold against normal quantiles;
power is predicted through the normal-shift power function evaluated at the
simulated mean shift.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import conic, diagnostics, geometry as geo
from .rng import mc_collect, mix64
from .special import log_deficiency, norm_cdf, norm_pdf, upper_quantile

ONE_SIDED = "one-sided"
TWO_SIDED = "two-sided"

MONTE_CARLO = "monte-carlo"
CLOSED_FORM = "closed-form"


@dataclass
class NullSpec:
    """Point null (a fixed mean inside K) or subspace null (a subspace of K)."""

    kind: str                     # "point" | "subspace"
    mu0: np.ndarray = None
    k0: geo.ConstraintSet = None


def point_null(mu0):
    return NullSpec(kind="point", mu0=np.asarray(mu0, dtype=float))


def subspace_null(k0):
    if k0.tag not in (geo.SUBSPACE, geo.POLY_SUBSPACE):
        raise ValueError("subspace null needs a subspace constraint set")
    return NullSpec(kind="subspace", k0=k0)


def validate_null(cs, null, tol=1e-8):
    """Check the structural requirements of the null against the set."""
    if null.kind == "point":
        if null.mu0.shape != (cs.dim,):
            raise geo.DimensionMismatchError("null point length mismatch")
        res = geo.project(cs, null.mu0)
        gap = float(np.max(np.abs(res.point - null.mu0), initial=0.0))
        if gap > tol * (1.0 + float(np.abs(null.mu0).max(initial=0.0))):
            raise ValueError(f"null point is not in the constraint set (moved {gap:.2e})")
    elif null.kind == "subspace":
        conic.check_nested_null(cs, null)
    else:
        raise ValueError(f"unknown null kind {null.kind!r}")


def lrs(cs, null, y):
    """Log-likelihood-ratio statistic at a single observation."""
    y = np.asarray(y, dtype=float)
    if y.shape != (cs.dim,):
        raise geo.DimensionMismatchError("observation length mismatch")
    return float(conic.lrs_rows(cs, null, y[None, :])[0])


@dataclass
class NullCalibration:
    m_hat: float
    sigma_hat: float
    reps: int
    seed: int
    mode: str


@dataclass
class TestPlan:
    sidedness: str
    alpha: float
    calibration: NullCalibration

    def __post_init__(self):
        if self.sidedness not in (ONE_SIDED, TWO_SIDED):
            raise ValueError("sidedness must be 'one-sided' or 'two-sided'")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.calibration.sigma_hat <= 0:
            raise ValueError("calibration sigma must be positive")


class CalibrationInvarianceError(RuntimeError):
    """Null moments differed across two null points beyond sampling noise."""


def calibrate_null(cs, null, reps=20000, seed=0, mode=MONTE_CARLO, workers=None):
    """Estimate (or derive) the null mean and standard deviation of the LRS.

    Monte-Carlo mode simulates at the null point (point null) or at the
    origin of the null subspace, and for subspace nulls spot-checks the
    translation invariance of the statistic at a second null point.
    Closed-form mode applies only when the constraint set is a subspace:
    the statistic is then chi-squared with mean d and variance 2d (d the
    dimension drop), so sigma = sqrt(2d).
    """
    validate_null(cs, null)
    if mode == CLOSED_FORM:
        if cs.tag not in (geo.SUBSPACE, geo.POLY_SUBSPACE):
            raise ValueError("closed-form calibration needs a subspace constraint set")
        d = cs.basis.shape[1]
        if null.kind == "subspace":
            d -= null.k0.basis.shape[1]
        if d <= 0:
            raise ValueError("closed-form calibration needs a positive dimension drop")
        return NullCalibration(m_hat=float(d), sigma_hat=math.sqrt(2.0 * d),
                               reps=0, seed=seed, mode=CLOSED_FORM)
    if mode != MONTE_CARLO:
        raise ValueError(f"unknown calibration mode {mode!r}")
    if reps < 1000:
        raise ValueError("monte-carlo calibration needs reps >= 1000")
    mu_sim = null.mu0 if null.kind == "point" else np.zeros(cs.dim)
    est = conic.estimate_lrs_moments(cs, null, mu_sim, reps, seed, workers=workers)
    if null.kind == "subspace" and null.k0.basis.shape[1] > 0:
        mu_alt = 2.5 * null.k0.basis[:, 0] * math.sqrt(cs.dim)
        reps_alt = max(1000, reps // 10)
        alt = conic.estimate_lrs_moments(cs, null, mu_alt, reps_alt,
                                         mix64(seed, 104729), workers=workers)
        tol = 4.0 * math.sqrt(est.se_mean ** 2 + alt.se_mean ** 2)
        if abs(est.mean - alt.mean) > tol:
            raise CalibrationInvarianceError(
                f"null mean differs across null points: {est.mean:.4f} vs "
                f"{alt.mean:.4f} (allowed {tol:.4f})")
    return NullCalibration(m_hat=est.mean, sigma_hat=math.sqrt(est.variance),
                           reps=reps, seed=seed, mode=MONTE_CARLO)


def decide(T, plan):
    """Reject? Standardizes the statistic and thresholds at the exact
    normal quantile."""
    cal = plan.calibration
    z = (T - cal.m_hat) / cal.sigma_hat
    if plan.sidedness == ONE_SIDED:
        return bool(z > upper_quantile(plan.alpha))
    return bool(abs(z) > upper_quantile(plan.alpha / 2.0))


def delta_power(sidedness, alpha, w):
    """Normal-shift power: chance a unit normal centered at w escapes the
    acceptance interval.  Handles infinite shifts by their limits."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if sidedness == ONE_SIDED:
        if math.isinf(w):
            return 1.0 if w > 0 else 0.0
        return float(norm_cdf(-upper_quantile(alpha) + w))
    if sidedness == TWO_SIDED:
        if math.isinf(w):
            return 1.0
        z = upper_quantile(alpha / 2.0)
        return float(norm_cdf(-z + w) + norm_cdf(-z - w))
    raise ValueError("sidedness must be 'one-sided' or 'two-sided'")


@dataclass
class PowerPrediction:
    shift_w: float
    predicted_power: float
    err_null_bound: float
    ell_term: float
    valid_regime: bool
    shift_se: float = None


def predict_power(cs, null, mu, plan, reps, seed, workers=None):
    """Predicted rejection probability at the alternative `mu`.

    The mean shift is estimated with common random numbers: paired
    differences of the statistic for point nulls, the shifted-projection
    moment gap for subspace nulls.  The prediction comes with the two
    expansion error terms: the normal-approximation bound at the null and
    the deficiency of the shift estimate's separation.
    """
    mu = np.asarray(mu, dtype=float)
    cal = plan.calibration
    if null.kind == "point":
        mu0 = null.mu0

        def block(xi, start):
            t_alt = conic.lrs_rows(cs, null, mu + xi)
            t_null = conic.lrs_rows(cs, null, mu0 + xi)
            return {"d": t_alt - t_null}, {}

        per, _ = mc_collect(cs.dim, reps, seed, block, workers=workers)
        mdiff = float(per["d"].mean())
        mdiff_se = float(per["d"].std(ddof=1) / math.sqrt(reps))
        separation = float(np.linalg.norm(mu - mu0))
    else:
        p0, _ = geo.project_rows(null.k0, mu[None, :], want_face_dim=False)
        nu = mu - p0[0]
        gamma = conic.estimate_gamma(cs, nu, 2, reps, seed, workers=workers)
        mdiff, mdiff_se = gamma.value, gamma.se
        separation = float(np.linalg.norm(nu))

    shift = mdiff / cal.sigma_hat
    predicted = delta_power(plan.sidedness, plan.alpha, shift)
    denom = max(abs(mdiff), cal.sigma_hat)
    ell = log_deficiency(min(1.0, separation / denom)) if separation > 0 else 0.0
    err = diagnostics.normal_bound_rhs(cs, null, reps=min(reps, 2000),
                                       seed=mix64(seed, 7919),
                                       workers=workers).rhs_value
    return PowerPrediction(shift_w=shift, predicted_power=predicted,
                           err_null_bound=err, ell_term=ell,
                           valid_regime=bool(ell + 2.0 * err < 0.5),
                           shift_se=mdiff_se / cal.sigma_hat)


def standardized_stats(cs, null, mu, cal, reps, seed, workers=None):
    """Per-replication standardized statistics (T - m_hat) / sigma_hat at
    mean `mu`."""
    mu = np.asarray(mu, dtype=float)

    def block(xi, start):
        t = conic.lrs_rows(cs, null, mu + xi)
        return {"s": (t - cal.m_hat) / cal.sigma_hat}, {}

    per, _ = mc_collect(cs.dim, reps, seed, block, workers=workers)
    return per["s"]


def empirical_power(cs, null, mu, plan, reps, seed, workers=None):
    """Monte-Carlo rejection frequency of the test at mean `mu`.

    Returns (power, binomial standard error).
    """
    mu = np.asarray(mu, dtype=float)
    cal = plan.calibration
    z = upper_quantile(plan.alpha if plan.sidedness == ONE_SIDED else plan.alpha / 2.0)

    def block(xi, start):
        t = conic.lrs_rows(cs, null, mu + xi)
        s = (t - cal.m_hat) / cal.sigma_hat
        rej = s > z if plan.sidedness == ONE_SIDED else np.abs(s) > z
        return {"rej": rej.astype(float)}, {}

    per, _ = mc_collect(cs.dim, reps, seed, block, workers=workers)
    p = float(per["rej"].mean())
    return p, math.sqrt(p * (1.0 - p) / reps)


# ---------------------------------------------------------------------------
# orthant closed forms

def orthant_closed_forms(x):
    """Per-coordinate orthant LRS mean terms at a nonnegative level x.

    Returns (sbar, q): q is the per-coordinate contribution of the mean of
    the statistic beyond the squared distance to the null, and sbar is its
    centered version q - 1/2; sbar is identically q - 1/2 and vanishes at 0.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError("closed forms are defined for nonnegative levels")
    sbar = norm_cdf(arr) + arr * norm_pdf(arr) - arr ** 2 * (1.0 - norm_cdf(arr)) - 0.5
    q = sbar + 0.5
    if np.ndim(x) == 0:
        return float(sbar), float(q)
    return sbar, q


def counter_f(c):
    """Gap between the LRS means at level c and at level 1, per coordinate,
    for the all-ones null: (c-1)^2 + sbar(c) - sbar(1)."""
    if c < 0:
        raise ValueError("level must be nonnegative")
    sbar_c, _ = orthant_closed_forms(c)
    sbar_1, _ = orthant_closed_forms(1.0)
    return (c - 1.0) ** 2 + sbar_c - sbar_1


def find_c0(tol=1e-12, max_iter=200):
    """Root of `counter_f` in (0, 1), by bisection."""
    lo, hi = 1e-6, 1.0 - 1e-6
    flo = counter_f(lo)
    fhi = counter_f(hi)
    if not (flo > 0 > fhi):
        raise RuntimeError("bisection bracket lost its sign change")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = counter_f(mid)
        if abs(fmid) < tol:
            return mid
        if fmid > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class SeparationCheck:
    lhs: float
    rhs: float
    satisfied: bool
    denominator: float = None


def wwg_separation_check(set_k, set_k0, mu, summary, seed=0):
    """Worst-case separation predicate for subspace-vs-cone testing.

    lhs is the distance of `mu` to the null subspace; rhs is the smaller of
    delta^(1/4) and delta^(1/2) over the positive part of the infimal
    correlation of unit cone directions with the mean projected noise.  The
    infimum is taken over unit-norm members of the cone: for the orthant it
    is attained at a coordinate direction, for circular cones on the
    boundary ray facing away from the mean, and otherwise it is approximated
    from above by sampled unit cone points (making rhs an upper bound).
    """
    mu = np.asarray(mu, dtype=float)
    p0, _ = geo.project_rows(set_k0, mu[None, :], want_face_dim=False)
    lhs = float(np.linalg.norm(mu - p0[0]))
    v = summary.mean_proj
    delta = summary.delta_hat
    tag = set_k.tag
    if tag in (geo.SUBSPACE, geo.POLY_SUBSPACE):
        inf_corr = 0.0
    elif tag == geo.ORTHANT:
        inf_corr = float(np.min(v))
    elif tag == geo.CIRCULAR:
        inf_corr = _circular_inf(v, set_k.half_angle)
    elif tag == geo.PRODUCT_CIRCULAR:
        c = _circular_inf(v[:-1], set_k.half_angle)
        tail = abs(float(v[-1]))
        inf_corr = -math.hypot(c, tail) if c < 0 else -tail
    else:
        rng = np.random.Generator(np.random.PCG64(mix64(seed, 31337)))
        pts = geo.sample_points(set_k, rng, 10000, scale=2.0)
        norms = np.linalg.norm(pts, axis=1)
        keep = norms > 1e-12
        inf_corr = float(np.min((pts[keep] / norms[keep, None]) @ v))
    denom = max(0.0, inf_corr)
    rhs = delta ** 0.25 if denom <= 0 else min(delta ** 0.25, math.sqrt(delta) / denom)
    return SeparationCheck(lhs=lhs, rhs=rhs, satisfied=bool(lhs > rhs),
                           denominator=denom)


def _circular_inf(v, half_angle):
    """min over unit cone members of <eta, v> for the circular cone."""
    t, w = float(v[0]), v[1:]
    r = float(np.linalg.norm(w))
    # boundary ray at the full half-angle, steered against the transverse part
    return t * math.cos(half_angle) - r * math.sin(half_angle)
