"""Independent reference implementations used to pin expected values.

Everything here is deliberately written against the mathematical
definitions (exhaustive enumeration, brute-force search, quadrature-style
grids) and never calls the code paths it is used to check.
"""

import itertools
import math

import numpy as np


def minmax_isotonic(y):
    """Isotonic fit by exhaustive evaluation of the max-min window means."""
    y = np.asarray(y, dtype=float)
    n = y.size
    out = np.empty(n)
    for i in range(n):
        best = -math.inf
        for u in range(i + 1):
            inner = min(y[u:v + 1].mean() for v in range(i, n))
            best = max(best, inner)
        out[i] = best
    return out


def brute_force_difference_cone(x, order):
    """Projection onto {mu : forward differences of the given order+1 >= 0}
    by enumerating every subset of active constraints."""
    x = np.asarray(x, dtype=float)
    n = x.size
    A = np.diff(np.eye(n), n=order + 1, axis=0)
    m = A.shape[0]
    best = None
    for bits in itertools.product([0, 1], repeat=m):
        mask = np.array(bits, dtype=bool)
        if mask.any():
            B = A[mask]
            lam = np.linalg.lstsq(B @ B.T, B @ x, rcond=None)[0]
            cand = x - B.T @ lam
        else:
            cand = x.copy()
        if np.min(A @ cand) >= -1e-9:
            val = float(np.sum((x - cand) ** 2))
            if best is None or val < best[0] - 1e-12:
                best = (val, cand)
    return best[1]


def grid_project_circular_2d(x, half_angle, lim=4.0, steps=2001):
    """Nearest cone point found on a dense 2-d grid."""
    a = math.tan(half_angle)
    ts = np.linspace(-lim, lim, steps)
    ws = np.linspace(-lim, lim, steps)
    T, W = np.meshgrid(ts, ws, indexing="ij")
    feasible = np.abs(W) <= a * T
    d2 = (T - x[0]) ** 2 + (W - x[1]) ** 2
    d2[~feasible] = np.inf
    i, j = np.unravel_index(np.argmin(d2), d2.shape)
    return np.array([ts[i], ws[j]])


def soft_threshold_certificate(v, out, radius, tol=1e-9):
    """KKT check for the l1-ball projection: out must be the coordinatewise
    soft threshold of v at a single level, and saturate the radius when v
    lies outside the ball."""
    v = np.asarray(v, dtype=float)
    out = np.asarray(out, dtype=float)
    if np.abs(v).sum() <= radius + tol:
        return bool(np.allclose(out, v, atol=tol))
    if abs(np.abs(out).sum() - radius) > 1e-7 * max(1.0, radius):
        return False
    shrink = np.abs(v) - np.abs(out)
    on = np.abs(out) > tol
    if not np.any(on):
        return False
    tau = shrink[on]
    if np.ptp(tau) > 1e-7 * max(1.0, np.abs(v).max()):
        return False
    tau0 = float(tau.mean())
    if tau0 < -tol:
        return False
    off_ok = np.all(np.abs(v)[~on] <= tau0 + 1e-7)
    signs_ok = np.all(np.sign(out[on]) == np.sign(v[on]))
    return bool(off_ok and signs_ok)


def normal_cdf(x):
    """Reference normal CDF straight from the error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def ks_std_exp_shift_oracle(grid_steps=400001, lo=-1.0, hi=6.0):
    """sup |F - Phi| where F is the CDF of a standardized chi-squared(2)
    variable: F(t) = 1 - exp(-(1+t)) for t >= -1.  The sup is attained at
    the support edge t -> -1+, where F vanishes but Phi does not; a dense
    grid confirms nothing interior exceeds it."""
    ts = np.linspace(lo, hi, grid_steps)
    F = np.where(ts >= -1.0, 1.0 - np.exp(-(1.0 + ts)), 0.0)
    Phi = np.array([normal_cdf(t) for t in ts])
    interior = float(np.max(np.abs(F - Phi)))
    return max(interior, normal_cdf(-1.0))


def harmonic(n):
    return float(sum(1.0 / i for i in range(1, n + 1)))


def orthant_gamma2_one_coord(level):
    """E(level + z)_+^2 - E(z)_+^2 from the Gaussian tail formulas."""
    x = float(level)
    phi = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    Phi = normal_cdf(x)
    return (1.0 + x * x) * Phi + x * phi - 0.5


def per_coordinate_counterexample_variance(level, reps, seed):
    """1-d Monte-Carlo oracle for the orthant LRS coordinate variance under
    the all-ones null."""
    z = np.random.Generator(np.random.PCG64(seed)).standard_normal(reps)
    y = level + z
    g = (y - 1.0) ** 2 - np.minimum(y, 0.0) ** 2
    return float(g.var(ddof=1))
