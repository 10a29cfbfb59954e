"""Distributional distances and numeric verification of the theory bounds.

`ks_distance` measures the exact sup-distance between an empirical CDF and
a reference law (the Kolmogorov distance; a lower bound on total variation,
which is what the reported DKW envelope calibrates).  `normal_bound_rhs`
assembles the normal-approximation error bound for the standardized
statistic from Monte-Carlo estimates of the projection's bias, error and
expected Jacobian.  `identity_checks` verifies the exact algebraic
identities the projection must satisfy, and `iso_jacobian_band_check`
probes the diagonal band of the averaged isotonic Jacobian.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .rng import batch_jackknife_se, mc_collect, mix64
from .special import chi2_cdf, dkw_bound, norm_cdf

STD_NORMAL = "std-normal"
CHI_SQUARED = "chi-squared"

FD_REPS_CAP = 2000
FD_DIM_CAP = 200


@dataclass
class DistanceReport:
    statistic: float
    reps: int
    reference: str
    dkw_bound: float
    df: int = None


@dataclass
class BoundReport:
    rhs_value: float
    numerator: float         # estimated squared estimation error
    bias_sq: float           # squared norm of the projection bias
    jac_frob_sq: float       # squared Frobenius norm of the mean Jacobian
    reps: int
    mode: str = "general"


class CostCapExceeded(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


def ks_distance(samples, reference, df=None, confidence=0.99):
    """Exact sup-distance between the sample ECDF and the reference CDF.

    reference is "std-normal" or "chi-squared" (with `df`).  The report
    carries the 99% DKW envelope for the sample size.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("samples must be nonempty")
    if np.any(~np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    n = x.size
    if reference == STD_NORMAL:
        cdf = norm_cdf(x)
    elif reference == CHI_SQUARED:
        if df is None or df <= 0:
            raise ValueError("chi-squared reference needs a positive df")
        cdf = chi2_cdf(x, df)
    else:
        raise ValueError(f"unknown reference {reference!r}")
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    stat = float(np.max(np.maximum(hi - cdf, cdf - lo)))
    return DistanceReport(statistic=stat, reps=n, reference=reference,
                          dkw_bound=dkw_bound(n, confidence), df=df)


def _mean_jacobian_terms(cs, mu0, reps, seed, workers):
    """Monte-Carlo (numerator, bias_sq, corrected ||E J||_F^2).

    Closed-form Jacobians for subspace/orthant/monotone tags, central
    finite differences otherwise (replications capped at FD_REPS_CAP and
    dimension at FD_DIM_CAP).  The Frobenius term squares the entrywise
    mean, so its naive plug-in is biased upward by the sampling variance
    of each cell; jackknife-style correction subtracts var/reps cellwise.
    """
    tag = cs.tag
    n = cs.dim
    closed = tag in (geo.ORTHANT, geo.MONOTONE) or (tag == geo.K_MONOTONE and cs.order == 0)
    if not closed:
        if n > FD_DIM_CAP or reps > FD_REPS_CAP:
            # the projection-only components are cheap; ship them with the error
            cheap_reps = min(reps, FD_REPS_CAP)

            def block(xi, start):
                p, _ = geo.project_rows(cs, mu0 + xi, want_face_dim=False)
                d = p - mu0
                return ({"err": np.einsum("ij,ij->i", d, d)},
                        {"proj": p.sum(axis=0)})

            per, part = mc_collect(n, cheap_reps, seed, block, workers=workers)
            bias = part["proj"] / cheap_reps - mu0
            partial = BoundReport(rhs_value=float("nan"),
                                  numerator=float(per["err"].mean()),
                                  bias_sq=float(bias @ bias),
                                  jac_frob_sq=float("nan"),
                                  reps=cheap_reps, mode="partial")
            raise CostCapExceeded(
                f"finite-difference Jacobian averaging needs n <= {FD_DIM_CAP} "
                f"and reps <= {FD_REPS_CAP}; got n={n}, reps={reps}",
                partial=partial)

    if tag == geo.ORTHANT:
        def block(xi, start):
            y = mu0 + xi
            p = np.maximum(y, 0.0)
            d = p - mu0
            act = (y > 0).astype(float)
            return ({"err": np.einsum("ij,ij->i", d, d)},
                    {"proj": p.sum(axis=0), "act": act.sum(axis=0),
                     "act_sq": (act ** 2).sum(axis=0)})

        per, part = mc_collect(n, reps, seed, block, workers=workers)
        pbar = part["act"] / reps
        var_cell = (part["act_sq"] - reps * pbar ** 2) / max(reps - 1, 1)
        jac_frob_sq = float(np.sum(pbar ** 2) - np.sum(var_cell) / reps)
    elif closed:
        def block(xi, start):
            y = mu0 + xi
            fit, nb = geo.pava_batch_fit(y)
            d = fit - mu0
            jsum = np.zeros((n, n))
            jsq = np.zeros((n, n))
            for row, k in zip(fit, nb):
                starts = np.flatnonzero(np.diff(row) > 0) + 1
                bounds = np.concatenate(([0], starts, [n]))
                for a, b in zip(bounds[:-1], bounds[1:]):
                    w = 1.0 / (b - a)
                    jsum[a:b, a:b] += w
                    jsq[a:b, a:b] += w * w
            return ({"err": np.einsum("ij,ij->i", d, d)},
                    {"proj": fit.sum(axis=0), "jsum": jsum, "jsq": jsq})

        per, part = mc_collect(n, reps, seed, block, workers=workers)
        jbar = part["jsum"] / reps
        var_cell = (part["jsq"] - reps * jbar ** 2) / max(reps - 1, 1)
        jac_frob_sq = float(np.sum(jbar ** 2) - np.sum(var_cell) / reps)
    else:
        def block(xi, start):
            y = mu0 + xi
            p, _ = geo.project_rows(cs, y, want_face_dim=False)
            d = p - mu0
            jsum = np.zeros((n, n))
            jsq = np.zeros((n, n))
            for row in y:
                J = geo.jacobian_fd_no_check(cs, row)
                jsum += J
                jsq += J * J
            return ({"err": np.einsum("ij,ij->i", d, d)},
                    {"proj": p.sum(axis=0), "jsum": jsum, "jsq": jsq})

        per, part = mc_collect(n, reps, seed, block, workers=workers)
        jbar = part["jsum"] / reps
        var_cell = (part["jsq"] - reps * jbar ** 2) / max(reps - 1, 1)
        jac_frob_sq = float(np.sum(jbar ** 2) - np.sum(var_cell) / reps)

    numerator = float(per["err"].mean())
    bias = part["proj"] / reps - mu0
    bias_sq = float(bias @ bias)
    return numerator, bias_sq, jac_frob_sq


def normal_bound_rhs(cs, null, reps, seed, workers=None):
    """Right-hand side of the normal-approximation error bound.

    Point null against a subspace is exact (8 / sqrt(d)); a subspace null
    inside a cone uses the pivotal bound 8 / sqrt(delta_K - dim(K0)) with
    the statistical dimension estimated by Monte Carlo; otherwise the
    general bound 8 sqrt(E||mu_hat - mu0||^2) / (2 bias^2 + ||E J||_F^2)
    is assembled from simulation."""
    from . import conic  # local import: conic has no dependency on this module

    if null.kind == "subspace":
        summary = conic.estimate_conic_summary(cs, reps, seed, workers=workers)
        d0 = null.k0.basis.shape[1]
        drop = summary.delta_hat - d0
        if drop <= 0:
            raise ValueError("statistical dimension drop is not positive")
        return BoundReport(rhs_value=8.0 / math.sqrt(drop), numerator=drop,
                           bias_sq=0.0, jac_frob_sq=2.0 * drop, reps=reps,
                           mode="cone-vs-subspace")
    if cs.tag in (geo.SUBSPACE, geo.POLY_SUBSPACE):
        d = cs.basis.shape[1]
        return BoundReport(rhs_value=8.0 / math.sqrt(d), numerator=float(d),
                           bias_sq=0.0, jac_frob_sq=float(d), reps=0,
                           mode="subspace-exact")
    numerator, bias_sq, jac_frob_sq = _mean_jacobian_terms(
        cs, null.mu0, reps, seed, workers)
    rhs = 8.0 * math.sqrt(numerator) / (2.0 * bias_sq + jac_frob_sq)
    return BoundReport(rhs_value=rhs, numerator=numerator, bias_sq=bias_sq,
                       jac_frob_sq=jac_frob_sq, reps=reps, mode="general")


@dataclass
class CheckResult:
    name: str
    value: float
    se: float = None
    tolerance: float = None
    passed: bool = None


def identity_checks(cs, mu, reps, seed, mu0=None, workers=None):
    """Named residuals for the exact identities the projection satisfies.

    Returns a dict with (where applicable): `stein_residual` (mean of the
    statistic minus its divergence representation, paired per replication),
    `moreau_max_violation` (orthogonality of the cone split plus polar
    feasibility, deterministic), `var_lower_margin` / `var_upper_margin`
    (variance of the projected squared norm against twice and four times
    its mean) and `translation_residual` (equivariance along directions
    that translate the set into itself).
    """
    from . import conic

    mu = np.asarray(mu, dtype=float)
    out = {}
    if mu0 is None:
        mu0 = np.zeros(cs.dim)
    mu0 = np.asarray(mu0, dtype=float)

    # Stein / divergence representation of the mean of the statistic,
    # restricted to tags whose Jacobian trace equals the face dimension.
    if cs.is_polyhedral:
        sq0 = float((mu - mu0) @ (mu - mu0))

        def block(xi, start):
            y = mu + xi
            p, fd = geo.project_rows(cs, y, want_face_dim=True)
            d0 = y - mu0
            dfit = y - p
            t = (np.einsum("ij,ij->i", d0, d0) - np.einsum("ij,ij->i", dfit, dfit))
            err = p - mu
            rhs = sq0 + 2.0 * fd - np.einsum("ij,ij->i", err, err)
            return {"resid": t - rhs}, {}

        per, _ = mc_collect(cs.dim, reps, seed, block, workers=workers)
        r = per["resid"]
        se = float(r.std(ddof=1) / math.sqrt(reps))
        val = float(r.mean())
        out["stein_residual"] = CheckResult("stein_residual", val, se=se,
                                            tolerance=3.0 * se,
                                            passed=bool(abs(val) <= 3.0 * se))

    if cs.is_cone:
        rng = np.random.Generator(np.random.PCG64(mix64(seed, 271828)))
        pts = 3.0 * rng.standard_normal((1000, cs.dim))
        proj, _ = geo.project_rows(cs, pts, want_face_dim=False)
        polar = pts - proj
        inner = np.abs(np.einsum("ij,ij->i", proj, polar))
        scale = np.maximum(1.0, np.einsum("ij,ij->i", pts, pts))
        members = geo.sample_points(cs, rng, 200, scale=2.0)
        mnorm = np.linalg.norm(members, axis=1)
        keep = mnorm > 1e-12
        cross = polar @ members[keep].T / mnorm[keep]
        viol = max(float(np.max(inner / scale)),
                   float(np.max(cross / np.sqrt(scale)[:, None], initial=0.0)))
        out["moreau_max_violation"] = CheckResult(
            "moreau_max_violation", viol, tolerance=1e-8, passed=bool(viol < 1e-8))

        summary = conic.estimate_conic_summary(cs, max(reps, 100),
                                               mix64(seed, 314159), workers=workers)
        tol = 3.0 * summary.var_margin_se
        out["var_lower_margin"] = CheckResult(
            "var_lower_margin", summary.var_lower_margin, se=summary.var_margin_se,
            tolerance=tol, passed=bool(summary.var_lower_margin >= -tol))
        out["var_upper_margin"] = CheckResult(
            "var_upper_margin", summary.var_upper_margin, se=summary.var_margin_se,
            tolerance=tol, passed=bool(summary.var_upper_margin >= -tol))

    shift = _invariant_translation(cs, mu)
    if shift is not None:
        rng = np.random.Generator(np.random.PCG64(mix64(seed, 161803)))
        pts = rng.standard_normal((min(200, max(reps, 1)), cs.dim))
        base, _ = geo.project_rows(cs, pts, want_face_dim=False)
        moved, _ = geo.project_rows(cs, pts + shift, want_face_dim=False)
        resid = float(np.max(np.abs(moved - shift - base)))
        out["translation_residual"] = CheckResult(
            "translation_residual", resid, tolerance=1e-8, passed=bool(resid < 1e-8))
    return out


def _invariant_translation(cs, mu):
    """A direction along which the set translates into itself, or None."""
    if cs.tag in (geo.SUBSPACE, geo.POLY_SUBSPACE):
        U = cs.basis
        return U @ (U.T @ mu)
    if cs.tag == geo.MONOTONE:
        return np.full(cs.dim, float(np.mean(mu)))
    if cs.tag == geo.K_MONOTONE:
        k0 = geo.poly_subspace(cs.dim, cs.order)
        U = k0.basis
        return U @ (U.T @ mu)
    return None


@dataclass
class IsoBandReport:
    min_value: float
    min_se: float
    argmin: tuple
    band_halfwidth: int
    row_range: tuple
    band_means: np.ndarray       # rows x offsets, NaN outside the band
    offsets: np.ndarray
    rows: np.ndarray
    reps: int
    seed: int


class InsufficientRepsError(RuntimeError):
    pass


def iso_jacobian_band_check(n, reps, seed, slope=1.0, kappa=0.1, workers=None,
                            sanity_subspace=False):
    """Minimum of the averaged monotone-fit Jacobian over the central band.

    The null mean is the equispaced ramp slope*(i+1)/n.  The band covers
    |i-j| <= kappa * n^(2/3) for rows in [0.1 n, 0.9 n).  Entries are
    averaged over replications in 100 batches; the returned SE is the
    batch jackknife for the minimizing entry.  With `sanity_subspace` the
    projection is replaced by averaging onto the constant vector, whose
    Jacobian is exactly 1/n everywhere.
    """
    w = max(1, int(kappa * n ** (2.0 / 3.0)))
    r0, r1 = int(0.1 * n), int(0.9 * n)
    rows = np.arange(r0, r1)
    offsets = np.arange(-w, w + 1)
    mu0 = slope * (np.arange(1, n + 1) / n)
    batches = min(100, reps)
    edges = np.linspace(0, reps, batches + 1).astype(int)

    def block(xi, start):
        y = mu0 + xi
        local = np.zeros((batches, rows.size, offsets.size))
        if sanity_subspace:
            cnts = _batch_counts(start, xi.shape[0], edges)
            local += cnts[:, None, None] / n
            return {"z": np.zeros(xi.shape[0])}, {"band": local, "cnt": cnts}
        fit, nb = geo.pava_batch_fit(y)
        for j, row in enumerate(fit):
            b = np.searchsorted(edges[1:], start + j, side="right")
            starts = np.flatnonzero(np.diff(row) > 0) + 1
            bounds = np.concatenate(([0], starts, [n]))
            for a, bnd in zip(bounds[:-1], bounds[1:]):
                if bnd <= r0 or a >= r1:
                    continue
                val = 1.0 / (bnd - a)
                i_lo, i_hi = max(a, r0), min(bnd, r1)
                for oi, d in enumerate(offsets):
                    j_lo = max(i_lo, a - d)
                    j_hi = min(i_hi, bnd - d)
                    if j_hi > j_lo:
                        local[b, j_lo - r0:j_hi - r0, oi] += val
        return {"z": np.zeros(xi.shape[0])}, {"band": local,
                                              "cnt": _batch_counts(start, xi.shape[0], edges)}

    _, part = mc_collect(n, reps, seed, block, workers=workers)
    acc = part["band"]
    counts = part["cnt"]
    # mask offsets that run out of the row range (their cells were never touched)
    total = acc.sum(axis=0) / reps
    valid = np.ones_like(total, dtype=bool)
    for oi, d in enumerate(offsets):
        j = rows + d
        valid[:, oi] = (j >= 0) & (j < n)
    means = np.where(valid, total, np.nan)
    flat = np.nanargmin(means)
    ri, oi = np.unravel_index(flat, means.shape)
    min_val = float(means[ri, oi])

    loo = (acc[:, ri, oi].sum() - acc[:, ri, oi]) / np.maximum(reps - counts, 1)
    center = loo.mean()
    min_se = float(np.sqrt((batches - 1) / batches * np.sum((loo - center) ** 2)))
    if not sanity_subspace:
        if min_se > abs(min_val):
            raise InsufficientRepsError(
                f"band minimum {min_val:.3e} is smaller than its SE {min_se:.3e}")
        if min_val <= 0:
            raise InsufficientRepsError(
                f"band minimum {min_val:.3e} is not strictly positive")
    return IsoBandReport(min_value=min_val, min_se=min_se,
                         argmin=(int(rows[ri]), int(rows[ri] + offsets[oi])),
                         band_halfwidth=w, row_range=(r0, r1),
                         band_means=means, offsets=offsets, rows=rows,
                         reps=reps, seed=seed)


def _batch_counts(start, size, edges):
    idx = np.arange(start, start + size)
    b = np.searchsorted(edges[1:], idx, side="right")
    return np.bincount(b, minlength=edges.size - 1).astype(float)


# ---------------------------------------------------------------------------
# l1-image (constrained regression) verification helpers

def lasso_jacobian_check(design, radius, mu, reps, seed, workers=None):
    """Divergence and estimation error of the l1-image projection.

    Per replication, the Jacobian trace is the full dimension p of the
    coefficient space whenever the unconstrained fit lands strictly inside
    the l1 ball (the projection is locally the unconstrained fit), and is
    measured by finite differences otherwise.  Returns MomentEstimate-like
    tuples (mean, se) for the trace and for ||mu_hat - mu||^2.
    """
    cs = geo.l1_image(design, radius)
    ops = geo._lasso_ops(cs)
    n, p = design.shape
    mu = np.asarray(mu, dtype=float)

    def block(xi, start):
        y = mu + xi
        theta0 = ops.theta_ls(y)
        inside = np.abs(theta0).sum(axis=1) < radius
        traces = np.full(xi.shape[0], float(p))
        for j in np.flatnonzero(~inside):
            J = geo.jacobian_fd_no_check(cs, y[j])
            traces[j] = float(np.trace(J))
        fit, _ = geo.project_rows(cs, y, want_face_dim=False)
        err = fit - mu
        return {"trace": traces, "err": np.einsum("ij,ij->i", err, err)}, {}

    per, _ = mc_collect(n, reps, seed, block, workers=workers)
    tr, err = per["trace"], per["err"]
    return (
        (float(tr.mean()), float(tr.std(ddof=1) / math.sqrt(reps))),
        (float(err.mean()), float(err.std(ddof=1) / math.sqrt(reps))),
    )


def lasso_tail_frequencies(design, theta, t_grid, reps, seed, workers=None):
    """Exceedance frequencies of the unconstrained fit's l1 norm above
    ||theta||_1 + t sqrt(p / (n lambda_min)), one per t."""
    X = np.asarray(design, dtype=float)
    n, p = X.shape
    theta = np.asarray(theta, dtype=float)
    sigma = X.T @ X / n
    lam_min = float(np.linalg.eigvalsh(sigma).min())
    unit = math.sqrt(p / (n * lam_min))
    pinv = np.linalg.pinv(X)
    mu = X @ theta
    base = float(np.abs(theta).sum())
    t_grid = np.asarray(t_grid, dtype=float)

    def block(xi, start):
        theta0 = (mu + xi) @ pinv.T
        norms = np.abs(theta0).sum(axis=1)
        exceed = norms[:, None] >= base + t_grid[None, :] * unit
        return {"exceed": exceed.astype(float)}, {}

    per, _ = mc_collect(n, reps, seed, block, workers=workers)
    return per["exceed"].mean(axis=0)
