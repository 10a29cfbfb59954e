"""Monte-Carlo estimation of conic and distributional functionals.

Everything here follows the deterministic replication contract from
`conelrt.rng`: a result is a pure function of (inputs, master seed),
independent of worker count.  Shifted and unshifted expectations are always
estimated with common random numbers, so the reported quantities are paired
differences with small standard errors.
"""

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .rng import batch_jackknife_se, mc_collect, mix64

MIN_SUMMARY_REPS = 100


@dataclass
class ConicSummary:
    """Monte-Carlo portrait of a constraint set under standard normal noise."""

    delta_hat: float              # mean squared norm of the projected noise
    delta_se: float
    var_norm_sq_hat: float        # variance of that squared norm
    var_norm_sq_se: float
    vj_hist: dict                 # face-dimension frequencies (polyhedral) or None
    mean_proj: np.ndarray         # average projected noise vector
    reps: int
    seed: int
    face_mean: float = None      # mean face dimension (polyhedral)
    face_gap: float = None       # mean(face_dim - ||proj||^2), paired
    face_gap_se: float = None
    var_lower_margin: float = None   # var_hat - 2 delta_hat
    var_upper_margin: float = None   # 4 delta_hat - var_hat
    var_margin_se: float = None


@dataclass
class MomentEstimate:
    mean: float
    variance: float
    se_mean: float
    se_variance: float
    reps: int
    seed: int = None


@dataclass
class GammaEstimate:
    """Paired-difference estimate of a shifted-projection moment gap."""

    value: float
    se: float
    p: int
    nu: np.ndarray
    quad_bound_violated: bool = False


def estimate_conic_summary(cs, reps, seed, workers=None):
    """Sample-average portrait of the set: statistical dimension, variance
    of the projected squared norm, face-dimension histogram (polyhedral
    tags only) and the mean projected noise vector."""
    if reps < MIN_SUMMARY_REPS:
        raise ValueError(f"need reps >= {MIN_SUMMARY_REPS}")
    polyhedral = cs.is_polyhedral

    def block(xi, start):
        P, fd = geo.project_rows(cs, xi, want_face_dim=polyhedral)
        normsq = np.einsum("ij,ij->i", P, P)
        per = {"normsq": normsq}
        if polyhedral:
            per["face"] = fd
        return per, {"proj_sum": P.sum(axis=0)}

    per, partial = mc_collect(cs.dim, reps, seed, block, workers=workers)
    normsq = per["normsq"]
    delta_hat = float(normsq.mean())
    delta_se = float(normsq.std(ddof=1) / np.sqrt(reps))
    var_hat = float(normsq.var(ddof=1))
    var_se = batch_jackknife_se(normsq, lambda a: np.var(a, ddof=1))
    mean_proj = partial["proj_sum"] / reps

    vj = face_mean = gap = gap_se = None
    if polyhedral:
        face = per["face"]
        counts = np.bincount(face, minlength=cs.dim + 1)
        vj = {int(j): counts[j] / reps for j in range(cs.dim + 1) if counts[j]}
        face_mean = float(face.mean())
        diff = face.astype(float) - normsq
        gap = float(diff.mean())
        gap_se = float(diff.std(ddof=1) / np.sqrt(reps))

    margin_se = float(np.sqrt((2.0 * delta_se) ** 2 + var_se ** 2))
    return ConicSummary(
        delta_hat=delta_hat, delta_se=delta_se,
        var_norm_sq_hat=var_hat, var_norm_sq_se=var_se,
        vj_hist=vj, mean_proj=mean_proj, reps=reps, seed=seed,
        face_mean=face_mean, face_gap=gap, face_gap_se=gap_se,
        var_lower_margin=var_hat - 2.0 * delta_hat,
        var_upper_margin=4.0 * delta_hat - var_hat,
        var_margin_se=margin_se,
    )


def estimate_gamma(cs, nu, p, reps, seed, workers=None):
    """Common-random-number estimate of
    E||proj(nu + xi)||^p - E||proj(xi)||^p."""
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (cs.dim,):
        raise geo.DimensionMismatchError("nu length must equal the set dimension")

    def block(xi, start):
        base, _ = geo.project_rows(cs, xi, want_face_dim=False)
        shifted, _ = geo.project_rows(cs, xi + nu, want_face_dim=False)
        bn = np.einsum("ij,ij->i", base, base)
        sn = np.einsum("ij,ij->i", shifted, shifted)
        if p == 1:
            diff = np.sqrt(sn) - np.sqrt(bn)
        else:
            diff = sn - bn
        return {"diff": diff}, {}

    per, _ = mc_collect(cs.dim, reps, seed, block, workers=workers)
    diff = per["diff"]
    value = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(reps))
    violated = False
    if p == 2 and geo.contains(cs, nu):
        violated = value + 3.0 * se < float(nu @ nu)
    return GammaEstimate(value=value, se=se, p=p, nu=nu, quad_bound_violated=violated)


def lrs_rows(cs, null, Y):
    """Log-likelihood-ratio statistic for each row of Y.

    Point null: ||Y - mu0||^2 - ||Y - proj_K(Y)||^2.
    Subspace null: ||Y - proj_K0(Y)||^2 - ||Y - proj_K(Y)||^2.
    """
    P, _ = geo.project_rows(cs, Y, want_face_dim=False)
    resid = Y - P
    fit_err = np.einsum("ij,ij->i", resid, resid)
    if null.kind == "point":
        d0 = Y - null.mu0
    else:
        P0, _ = geo.project_rows(null.k0, Y, want_face_dim=False)
        d0 = Y - P0
    return np.einsum("ij,ij->i", d0, d0) - fit_err


def check_nested_null(cs, null, seed=0, count=8, tol=1e-8):
    """For a subspace null, verify by sampling that K0 is contained in K."""
    if null.kind != "subspace":
        return
    k0 = null.k0
    if k0.dim != cs.dim:
        raise geo.DimensionMismatchError("null subspace dimension mismatch")
    pts = geo.sample_points(k0, np.random.Generator(np.random.PCG64(mix64(seed, 0))),
                            count, scale=3.0)
    P, _ = geo.project_rows(cs, pts, want_face_dim=False)
    worst = float(np.max(np.abs(P - pts), initial=0.0))
    if worst > tol * (1.0 + float(np.abs(pts).max(initial=0.0))):
        raise ValueError(f"null subspace is not contained in the constraint set "
                         f"(projection moved a sample by {worst:.2e})")


def estimate_lrs_moments(cs, null, mu, reps, seed, workers=None):
    """Mean and variance of the likelihood-ratio statistic at the given mean."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (cs.dim,):
        raise geo.DimensionMismatchError("mu length must equal the set dimension")
    check_nested_null(cs, null, seed=seed)

    def block(xi, start):
        return {"T": lrs_rows(cs, null, mu + xi)}, {}

    per, _ = mc_collect(cs.dim, reps, seed, block, workers=workers)
    T = per["T"]
    variance = float(T.var(ddof=1))
    return MomentEstimate(
        mean=float(T.mean()),
        variance=variance,
        se_mean=float(np.sqrt(variance / reps)),
        se_variance=batch_jackknife_se(T, lambda a: np.var(a, ddof=1)),
        reps=reps, seed=seed,
    )


def estimate_r(set_k, set_k0, reps, seed, workers=None):
    """Variance-to-mean ratio of the face dimension of the projection,
    relative to a nested subspace null.

    Samples face_dim(proj_K(xi)) - dim(K0), which identifies the face
    dimension of the projection onto the cone intersected with the polar
    of K0 (the pair is non-oblique).  Returned as a MomentEstimate whose
    `mean` is the ratio estimate and `se_mean` its delta-method SE.
    """
    if not (set_k.is_polyhedral and set_k.is_cone):
        raise ValueError("ratio estimation needs a polyhedral cone")
    if set_k0.tag not in (geo.SUBSPACE, geo.POLY_SUBSPACE):
        raise ValueError("the null set must be a subspace")
    d0 = set_k0.basis.shape[1]

    class _Null:
        kind = "subspace"
        k0 = set_k0
    check_nested_null(set_k, _Null(), seed=seed)

    def block(xi, start):
        _, fd = geo.project_rows(set_k, xi, want_face_dim=True)
        return {"v": fd.astype(float) - d0}, {}

    per, _ = mc_collect(set_k.dim, reps, seed, block, workers=workers)
    v = per["v"]
    m1 = float(v.mean())
    var = float(v.var(ddof=1))
    if m1 <= 0:
        ratio, se = 0.0, 0.0
    else:
        c = v - m1
        m2 = float(np.mean(c ** 2))
        m3 = float(np.mean(c ** 3))
        m4 = float(np.mean(c ** 4))
        var_mean = m2 / reps
        var_var = max(m4 - m2 ** 2, 0.0) / reps
        cov = m3 / reps
        ratio = var / m1
        grad_sq = (var_var / m1 ** 2 + var ** 2 * var_mean / m1 ** 4
                   - 2.0 * var * cov / m1 ** 3)
        se = float(np.sqrt(max(grad_sq, 0.0)))
    if not (-3.0 * se <= ratio <= 2.0 + 3.0 * se):
        raise RuntimeError(f"variance-to-mean ratio {ratio:.4f} (se {se:.4f}) "
                           "falls outside [0, 2] beyond 3 SE")
    return MomentEstimate(mean=ratio, variance=var, se_mean=se,
                          se_variance=batch_jackknife_se(v, lambda a: np.var(a, ddof=1)),
                          reps=reps, seed=seed)
