"""Constraint sets and their exact Euclidean projections.

Every supported constraint family is described by a `ConstraintSet` tag plus
a per-tag payload; `project` returns the metric projection together with the
dimension of the face hit (polyhedral families) and, for the monotone cone,
the constant blocks of the fit.  Closed forms are used wherever they exist
(coordinate clipping for the orthant, pool-adjacent-violators for the
monotone cone, the three-case split for circular cones, orthonormal-basis
multiplication for subspaces); the k-monotone cone uses an exact active-set
solve in its truncated-power generator basis, and the l1-constrained
regression image an accelerated projected-gradient solver over the
coefficient ball.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import pava_batch, pava_single

SUBSPACE = "subspace"
POLY_SUBSPACE = "poly-subspace"
ORTHANT = "orthant"
CIRCULAR = "circular"
PRODUCT_CIRCULAR = "product-circular"
MONOTONE = "monotone"
K_MONOTONE = "k-monotone"
L1_IMAGE = "l1-image"
PRODUCT = "product"

_CONE_TAGS = {SUBSPACE, POLY_SUBSPACE, ORTHANT, CIRCULAR, PRODUCT_CIRCULAR,
              MONOTONE, K_MONOTONE}
_POLYHEDRAL_TAGS = {SUBSPACE, POLY_SUBSPACE, ORTHANT, MONOTONE, K_MONOTONE}

CLOSED_FORM = "closed-form"
FINITE_DIFFERENCE = "finite-difference"


class DimensionMismatchError(ValueError):
    pass


class NotAConeError(ValueError):
    pass


class BoundaryDegeneracyError(ValueError):
    """The input sits within 1e-9 of a projection kink; the Jacobian is
    ambiguous there.  Callers may jitter and retry."""


class NonConvergenceError(RuntimeError):
    def __init__(self, message, iterations, residual):
        super().__init__(f"{message} (iterations={iterations}, kkt_residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(eq=False)
class ConstraintSet:
    """Tagged description of a closed convex set in R^n."""

    tag: str
    dim: int
    basis: np.ndarray = None          # subspace / poly-subspace (n x d, orthonormal)
    degree: int = None                # poly-subspace
    half_angle: float = None          # circular / product-circular
    order: int = None                 # k-monotone
    design: np.ndarray = None         # l1-image (n x p, full column rank)
    radius: float = None              # l1-image
    parts: tuple = None               # product
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def is_cone(self):
        if self.tag == PRODUCT:
            return all(p.is_cone for p in self.parts)
        return self.tag in _CONE_TAGS

    @property
    def is_polyhedral(self):
        if self.tag == PRODUCT:
            return all(p.is_polyhedral for p in self.parts)
        return self.tag in _POLYHEDRAL_TAGS

    def describe(self):
        extra = {
            SUBSPACE: lambda: f"d={self.basis.shape[1]}",
            POLY_SUBSPACE: lambda: f"degree={self.degree}",
            CIRCULAR: lambda: f"alpha={self.half_angle:.6g}",
            PRODUCT_CIRCULAR: lambda: f"alpha={self.half_angle:.6g}",
            K_MONOTONE: lambda: f"order={self.order}",
            L1_IMAGE: lambda: f"p={self.design.shape[1]}, radius={self.radius:.6g}",
            PRODUCT: lambda: f"{len(self.parts)} factors",
        }.get(self.tag)
        core = f"{self.tag}(n={self.dim}"
        return core + (f", {extra()})" if extra else ")")


def subspace(basis):
    """Linear subspace spanned by the (orthonormal) columns of `basis`."""
    basis = np.atleast_2d(np.asarray(basis, dtype=float))
    if basis.ndim != 2:
        raise ValueError("basis must be an n x d matrix")
    n, d = basis.shape
    if d > n:
        raise ValueError("basis has more columns than rows")
    if d > 0:
        gram = basis.T @ basis
        if not np.allclose(gram, np.eye(d), atol=1e-10):
            raise ValueError("basis columns must be orthonormal to 1e-10")
    return ConstraintSet(tag=SUBSPACE, dim=n, basis=basis)


def zero_point(n):
    """The trivial subspace {0} in R^n."""
    return ConstraintSet(tag=SUBSPACE, dim=n, basis=np.zeros((n, 0)))


def span_of(vectors):
    """Subspace spanned by the given (not necessarily orthonormal) rows."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float)).T
    q, r = np.linalg.qr(V)
    keep = np.abs(np.diag(r)) > 1e-12 * max(1.0, np.abs(r).max())
    return subspace(q[:, keep])


def poly_subspace(n, degree):
    """Polynomial sequences of degree <= `degree` on the equispaced grid."""
    if degree < 0 or degree + 1 > n:
        raise ValueError("need 0 <= degree <= n-1")
    t = np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
    V = np.vander(t, degree + 1, increasing=True)
    q, _ = np.linalg.qr(V)
    return ConstraintSet(tag=POLY_SUBSPACE, dim=n, degree=degree, basis=q)


def orthant(n):
    """Nonnegative orthant in R^n."""
    return ConstraintSet(tag=ORTHANT, dim=n)


def circular(n, half_angle):
    """Circular cone {v : v_1 >= ||v|| cos(half_angle)} in R^n."""
    if not 0.0 < half_angle < np.pi / 2:
        raise ValueError("half_angle must lie strictly inside (0, pi/2)")
    if n < 2:
        raise ValueError("circular cone needs dimension >= 2")
    return ConstraintSet(tag=CIRCULAR, dim=n, half_angle=float(half_angle))


def product_circular(n, half_angle):
    """Circular cone on the first n-1 coordinates times a free last one."""
    if not 0.0 < half_angle < np.pi / 2:
        raise ValueError("half_angle must lie strictly inside (0, pi/2)")
    if n < 3:
        raise ValueError("product circular cone needs dimension >= 3")
    return ConstraintSet(tag=PRODUCT_CIRCULAR, dim=n, half_angle=float(half_angle))


def monotone(n):
    """Nondecreasing sequences in R^n."""
    return ConstraintSet(tag=MONOTONE, dim=n)


def k_monotone(n, order):
    """Sequences with nonnegative (order+1)-th forward differences."""
    if order < 0:
        raise ValueError("order must be >= 0")
    if n < order + 2:
        raise ValueError("k-monotone cone needs n >= order + 2")
    return ConstraintSet(tag=K_MONOTONE, dim=n, order=int(order))


def l1_image(design, radius):
    """Image {X theta : ||theta||_1 <= radius} of the l1 ball under X."""
    X = np.asarray(design, dtype=float)
    if X.ndim != 2:
        raise ValueError("design must be an n x p matrix")
    n, p = X.shape
    if p > n:
        raise ValueError("design needs p <= n")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if np.linalg.matrix_rank(X) < p:
        raise ValueError("design must have full column rank")
    return ConstraintSet(tag=L1_IMAGE, dim=n, design=X, radius=float(radius))


def product(parts):
    """Cartesian product of constraint sets on consecutive coordinate blocks."""
    parts = tuple(parts)
    if not parts:
        raise ValueError("product needs at least one factor")
    return ConstraintSet(tag=PRODUCT, dim=sum(p.dim for p in parts), parts=parts)


@dataclass
class ProjectionResult:
    point: np.ndarray
    face_dim: int = None
    blocks: list = None               # monotone only: [(start, stop), ...]
    iterations: int = None            # iterative solvers only
    kkt_residual: float = None


@dataclass
class JacobianMatrix:
    entries: np.ndarray
    exactness: str


# ---------------------------------------------------------------------------
# difference operator helpers (k-monotone cone)

def difference_matrix(n, order):
    """Dense matrix of the `order`-fold forward difference operator."""
    return np.diff(np.eye(n), n=order, axis=0)


# ---------------------------------------------------------------------------
# projections

def _project_circular_rows(X, half_angle):
    """Three-case closed form for the circular cone along the first axis."""
    a = np.tan(half_angle)
    t = X[:, 0]
    w = X[:, 1:]
    r = np.linalg.norm(w, axis=1)
    inside = r <= a * t
    polar = r <= -t / a
    middle = ~(inside | polar)
    P = np.zeros_like(X)
    P[inside] = X[inside]
    if np.any(middle):
        tm = (t[middle] + a * r[middle]) / (1.0 + a * a)
        rm = np.where(r[middle] > 0, r[middle], 1.0)
        P[middle, 0] = tm
        P[middle, 1:] = (a * tm / rm)[:, None] * w[middle]
    return P


def _hinge_profile(n, m):
    """Mother generator: the m-fold zero-padded cumulative sum of a unit
    impulse.  Shifting it right by j gives the sequence whose m-th forward
    difference is the j-th coordinate impulse."""
    w = np.zeros(n)
    w[0] = 1.0
    for _ in range(m):
        w = np.concatenate(([0.0], np.cumsum(w)[:-1]))
    return w


def _hinge_correlations(r, m):
    """<r, g_j> for every shift j, via the adjoint of zero-padded cumsum."""
    d = r
    for _ in range(m):
        d = np.cumsum(d[::-1])[::-1][1:]
    return d


def _kmono_state(cs):
    if "kmono" not in cs._cache:
        n, m = cs.dim, cs.order + 1
        w = _hinge_profile(n, m)
        poly = poly_subspace(n, cs.order).basis
        norm_sq = np.cumsum(w ** 2)
        # ||g_j||^2 covers offsets 0 .. n-1-j
        gnorms = np.sqrt(norm_sq[::-1][:n - m])
        cs._cache["kmono"] = (w, poly, gnorms)
    return cs._cache["kmono"]


def _kmono_support_reduction(cs, x, tol=1e-9, max_iter=None):
    """Exact k-monotone projection by active-set least squares.

    The cone is the nonnegative span of shifted truncated-power generators
    plus the free polynomial part, so the projection is a nonnegative
    least-squares fit in that basis; knots enter one at a time (the most
    positive residual correlation) and leave through the standard
    Lawson-Hanson ratio test.  Feasibility holds by construction and the
    stopping rule is the exact KKT condition on the generator
    correlations, so termination is finite and the solution exact.

    Returns (mu, support, iterations, kkt_residual).
    """
    n, m = cs.dim, cs.order + 1
    w, poly, gnorms = _kmono_state(cs)
    if max_iter is None:
        max_iter = 4 * n
    scale = 1.0 + float(np.linalg.norm(x))
    support = []
    cols = []
    cur = np.zeros(0)                    # feasible hinge coefficients
    mu = poly @ (poly.T @ x)
    it = 0
    while it < max_iter:
        it += 1
        r = x - mu
        d = _hinge_correlations(r, m)
        crit = d / gnorms
        if support:
            crit[np.array(support)] = -np.inf
        j = int(np.argmax(crit))
        resid = float(crit[j]) / scale
        if resid <= tol:
            return mu, support, it, max(resid, 0.0)
        support.append(j)
        g = np.zeros(n)
        g[j:] = w[:n - j]
        cols.append(g)
        cur = np.concatenate((cur, [0.0]))
        # inner nonnegativity loop on the hinge coefficients
        while True:
            D = np.column_stack([poly] + cols)
            sol, *_ = np.linalg.lstsq(D, x, rcond=None)
            c = sol[poly.shape[1]:]
            if c.size == 0 or c.min() >= -1e-12 * scale:
                cur = c
                mu = D @ sol
                break
            neg = c < 0
            ratios = np.where(neg, cur / np.maximum(cur - c, 1e-300), np.inf)
            step = float(ratios.min())
            cur = cur + step * (c - cur)
            keep = cur > 1e-12 * scale
            # always retain the newest knot unless it is itself blocked
            support = [s for s, k in zip(support, keep) if k]
            cols = [col for col, k in zip(cols, keep) if k]
            cur = cur[keep]
            if not support:
                mu = poly @ (poly.T @ x)
                break
    raise NonConvergenceError("k-monotone projection did not converge", it,
                              float("nan"))


def _project_kmono_rows(cs, X, tol, max_iter):
    fits = np.empty_like(X)
    fdim = np.empty(X.shape[0], dtype=np.int64)
    worst = 0.0
    iters = 0
    for i in range(X.shape[0]):
        mu, support, it, resid = _kmono_support_reduction(cs, X[i], tol=tol)
        fits[i] = mu
        fdim[i] = cs.order + 1 + len(support)
        worst = max(worst, resid)
        iters = max(iters, it)
    return fits, fdim, iters, worst


def project_l1_ball(v, radius):
    """Euclidean projection onto the l1 ball, by sort and threshold."""
    v = np.asarray(v, dtype=float)
    if radius <= 0:
        raise ValueError("radius must be positive")
    if np.abs(v).sum() <= radius:
        return v.copy()
    return _project_l1_ball_rows(v[None, :], radius)[0]


def _project_l1_ball_rows(V, radius):
    A = np.abs(V)
    out = V.copy()
    over = A.sum(axis=1) > radius
    if not np.any(over):
        return out
    U = np.sort(A[over], axis=1)[:, ::-1]
    css = np.cumsum(U, axis=1)
    ks = np.arange(1, V.shape[1] + 1, dtype=float)
    cond = U - (css - radius) / ks > 0
    # last index where the threshold is still positive
    kidx = V.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    rows = np.arange(cond.shape[0])
    tau = (css[rows, kidx] - radius) / (kidx + 1.0)
    out[over] = np.sign(V[over]) * np.maximum(A[over] - tau[:, None], 0.0)
    return out


class _LassoOps:
    """Cached design-matrix factorizations for the l1-image family."""

    def __init__(self, cs):
        X = cs.design
        self.X = X
        self.radius = cs.radius
        self.pinv = np.linalg.pinv(X)
        self.gram = X.T @ X
        self.lip = _power_iteration_norm(self.gram)

    def theta_ls(self, Y_rows):
        return Y_rows @ self.pinv.T


def _power_iteration_norm(G, iters=200, tol=1e-12):
    """Largest eigenvalue of a PSD matrix by power iteration."""
    n = G.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(iters):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        lam_new = float(v @ (G @ v))
        if abs(lam_new - lam) <= tol * max(1.0, lam_new):
            lam = lam_new
            break
        lam = lam_new
    return lam * (1.0 + 1e-9)


def _lasso_ops(cs):
    if "lasso_ops" not in cs._cache:
        cs._cache["lasso_ops"] = _LassoOps(cs)
    return cs._cache["lasso_ops"]


def _lasso_fista_rows(ops, Y_rows, theta0, tol, max_iter):
    """Row-wise FISTA for min ||y - X theta||^2 / 2 s.t. ||theta||_1 <= radius."""
    X, G, lam_max, radius = ops.X, ops.gram, ops.lip, ops.radius
    XtY = Y_rows @ X
    theta = _project_l1_ball_rows(theta0, radius)
    z = theta.copy()
    t_mom = 1.0
    it = 0
    resid = np.inf
    while it < max_iter:
        it += 1
        g = z @ G - XtY
        theta_new = _project_l1_ball_rows(z - g / lam_max, radius)
        if np.sum(g * (theta_new - theta)) > 0:
            t_mom = 1.0
            z = theta_new.copy()
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            z = theta_new + ((t_mom - 1.0) / t_new) * (theta_new - theta)
            t_mom = t_new
        theta = theta_new
        if it % 10 == 0 or it == max_iter:
            g = theta @ G - XtY
            fixed = theta - _project_l1_ball_rows(theta - g, radius)
            resid = float(np.sqrt(np.sum(fixed * fixed, axis=-1)).max())
            if resid <= tol:
                break
    return theta, it, resid


def fit_constrained_lasso(X, y, radius, tol=1e-8, max_iter=100000):
    """Solve the l1-constrained least-squares regression.

    Returns (theta_hat, mu_hat, info) with info carrying the iteration
    count and final KKT residual (the fixed-point residual of the
    projected-gradient map).  When the unconstrained least-squares
    solution is already feasible it is returned exactly.
    """
    cs = l1_image(X, radius)
    ops = _lasso_ops(cs)
    y = np.asarray(y, dtype=float)
    if y.shape != (X.shape[0],):
        raise DimensionMismatchError("y length must match design rows")
    theta0 = ops.theta_ls(y[None, :])
    if np.abs(theta0[0]).sum() <= radius:
        theta = theta0[0]
        return theta, X @ theta, {"iterations": 0, "kkt_residual": 0.0}
    theta_rows, it, resid = _lasso_fista_rows(ops, y[None, :], theta0, tol, max_iter)
    if resid > tol:
        raise NonConvergenceError("constrained lasso did not converge", it, resid)
    theta = theta_rows[0]
    return theta, X @ theta, {"iterations": it, "kkt_residual": resid}


def project_rows(cs, X, *, tol=1e-6, max_iter=20000, want_face_dim=True):
    """Project the rows of X onto the set.  Returns (points, face_dims).

    face_dims is None for non-polyhedral tags or when not requested.
    This is the batch entry point used by the Monte-Carlo engines.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != cs.dim:
        raise DimensionMismatchError(
            f"points have dimension {X.shape[-1]}, set has {cs.dim}")
    tag = cs.tag
    if tag == SUBSPACE or tag == POLY_SUBSPACE:
        U = cs.basis
        P = (X @ U) @ U.T
        fd = None
        if want_face_dim:
            fd = np.full(X.shape[0], U.shape[1], dtype=np.int64)
        return P, fd
    if tag == ORTHANT:
        P = np.maximum(X, 0.0)
        fd = (P > 0).sum(axis=1).astype(np.int64) if want_face_dim else None
        return P, fd
    if tag == CIRCULAR:
        return _project_circular_rows(X, cs.half_angle), None
    if tag == PRODUCT_CIRCULAR:
        P = np.empty_like(X)
        P[:, :-1] = _project_circular_rows(X[:, :-1], cs.half_angle)
        P[:, -1] = X[:, -1]
        return P, None
    if tag == MONOTONE:
        fit, nblocks = pava_batch(X)
        return fit, (nblocks if want_face_dim else None)
    if tag == K_MONOTONE:
        if cs.order == 0:
            fit, nblocks = pava_batch(X)
            return fit, (nblocks if want_face_dim else None)
        mu, fd, _, _ = _project_kmono_rows(cs, X, min(tol, 1e-9), max_iter)
        return mu, (fd if want_face_dim else None)
    if tag == L1_IMAGE:
        ops = _lasso_ops(cs)
        theta0 = ops.theta_ls(X)
        feas = np.abs(theta0).sum(axis=1) <= cs.radius
        theta = theta0.copy()
        if not np.all(feas):
            rows = ~feas
            th, it, resid = _lasso_fista_rows(ops, X[rows], theta0[rows], tol, max_iter)
            if resid > tol:
                raise NonConvergenceError("l1-image projection did not converge",
                                          it, resid)
            theta[rows] = th
        return theta @ cs.design.T, None
    if tag == PRODUCT:
        P = np.empty_like(X)
        fd = np.zeros(X.shape[0], dtype=np.int64) if (want_face_dim and cs.is_polyhedral) else None
        off = 0
        for part in cs.parts:
            sl = slice(off, off + part.dim)
            Pp, fdp = project_rows(part, X[:, sl], tol=tol, max_iter=max_iter,
                                   want_face_dim=fd is not None)
            P[:, sl] = Pp
            if fd is not None:
                fd += fdp
            off += part.dim
        return P, fd
    raise ValueError(f"unknown tag {tag!r}")


def project(cs, x, *, tol=1e-8, max_iter=100000):
    """Metric projection of a single point; see `ProjectionResult`."""
    x = np.asarray(x, dtype=float)
    if x.shape != (cs.dim,):
        raise DimensionMismatchError(f"point has shape {x.shape}, set needs ({cs.dim},)")
    if cs.tag == MONOTONE or (cs.tag == K_MONOTONE and cs.order == 0):
        fit, starts = pava_single(x)
        bounds = list(starts) + [cs.dim]
        blocks = [(int(bounds[i]), int(bounds[i + 1])) for i in range(len(starts))]
        return ProjectionResult(point=fit, face_dim=len(blocks),
                                blocks=blocks if cs.tag == MONOTONE else None)
    if cs.tag == K_MONOTONE:
        mu, support, it, resid = _kmono_support_reduction(cs, x, tol=min(tol, 1e-9))
        return ProjectionResult(point=mu, face_dim=cs.order + 1 + len(support),
                                iterations=it, kkt_residual=resid)
    if cs.tag == L1_IMAGE:
        ops = _lasso_ops(cs)
        theta0 = ops.theta_ls(x[None, :])
        if np.abs(theta0[0]).sum() <= cs.radius:
            return ProjectionResult(point=theta0[0] @ cs.design.T, iterations=0,
                                    kkt_residual=0.0)
        th, it, resid = _lasso_fista_rows(ops, x[None, :], theta0, tol, max_iter)
        if resid > tol:
            raise NonConvergenceError("l1-image projection did not converge",
                                      it, resid)
        return ProjectionResult(point=th[0] @ cs.design.T, iterations=it,
                                kkt_residual=resid)
    P, fd = project_rows(cs, x[None, :])
    face_dim = int(fd[0]) if fd is not None else None
    if cs.tag in (CIRCULAR, PRODUCT_CIRCULAR):
        face_dim = None
    return ProjectionResult(point=P[0], face_dim=face_dim)


def pava(y):
    """Isotonic least-squares fit; total on nonempty inputs."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("pava needs a nonempty vector")
    return project(monotone(y.size), y)


def pava_batch_fit(Y):
    """Row-wise isotonic fit: (fitted rows, block counts)."""
    return pava_batch(np.ascontiguousarray(Y, dtype=np.float64))


def moreau_split(cs, x):
    """Orthogonal split x = primal + polar across the cone and its polar."""
    if not cs.is_cone:
        raise NotAConeError(f"moreau split needs a cone, got {cs.tag}")
    res = project(cs, x)
    primal = res.point
    return primal, np.asarray(x, dtype=float) - primal


def contains(cs, x, tol=1e-8):
    """Membership check, each defining constraint allowed `tol` slack."""
    x = np.asarray(x, dtype=float)
    if x.shape != (cs.dim,):
        return False
    tag = cs.tag
    if tag in (SUBSPACE, POLY_SUBSPACE):
        U = cs.basis
        return bool(np.max(np.abs(x - U @ (U.T @ x)), initial=0.0) <= tol)
    if tag == ORTHANT:
        return bool(np.min(x, initial=0.0) >= -tol)
    if tag == CIRCULAR:
        return x[0] >= np.linalg.norm(x) * np.cos(cs.half_angle) - tol
    if tag == PRODUCT_CIRCULAR:
        head = x[:-1]
        return head[0] >= np.linalg.norm(head) * np.cos(cs.half_angle) - tol
    if tag == MONOTONE:
        return bool(np.min(np.diff(x), initial=0.0) >= -tol)
    if tag == K_MONOTONE:
        return bool(np.min(np.diff(x, cs.order + 1), initial=0.0) >= -tol)
    if tag == L1_IMAGE:
        theta = _lasso_ops(cs).theta_ls(x[None, :])[0]
        in_range = np.max(np.abs(cs.design @ theta - x)) <= tol * (1 + np.abs(x).max())
        return bool(in_range and np.abs(theta).sum() <= cs.radius + tol)
    if tag == PRODUCT:
        off = 0
        for part in cs.parts:
            if not contains(part, x[off:off + part.dim], tol):
                return False
            off += part.dim
        return True
    raise ValueError(f"unknown tag {tag!r}")


def sample_points(cs, rng, count, scale=1.0):
    """Random members of the set (projections of scaled Gaussian points)."""
    raw = scale * rng.standard_normal((count, cs.dim))
    P, _ = project_rows(cs, raw, want_face_dim=False)
    return P


# ---------------------------------------------------------------------------
# Jacobians

def _monotone_jacobian_from_blocks(n, blocks):
    J = np.zeros((n, n))
    for a, b in blocks:
        J[a:b, a:b] = 1.0 / (b - a)
    return J


def _fd_jacobian(cs, x, step):
    n = cs.dim
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        hi, _ = project_rows(cs, (x + e)[None, :], tol=1e-10, max_iter=200000,
                             want_face_dim=False)
        lo, _ = project_rows(cs, (x - e)[None, :], tol=1e-10, max_iter=200000,
                             want_face_dim=False)
        J[:, j] = (hi[0] - lo[0]) / (2.0 * step)
    return J


def jacobian_fd_no_check(cs, x, step=1e-5):
    """Central-difference Jacobian without degeneracy detection.

    For Monte-Carlo averaging of the Jacobian, where kink inputs form a
    null set and an occasional one-sided value washes out.
    """
    return _fd_jacobian(cs, np.asarray(x, dtype=float), step)


def _check_circular_degeneracy(x, half_angle):
    t, w = x[0], x[1:]
    r = np.linalg.norm(w)
    a = np.tan(half_angle)
    scale = 1.0 + np.linalg.norm(x)
    if abs(r - a * t) < 1e-9 * scale or abs(r + t / a) < 1e-9 * scale:
        raise BoundaryDegeneracyError("point lies on a circular-cone regime boundary")


def jacobian(cs, x, fd_step=1e-5):
    """Jacobian of the projection map at x.

    Closed forms for subspaces (the projection matrix), the orthant (the
    diagonal activity indicator) and the monotone cone (block averaging);
    central finite differences with step `fd_step` otherwise.  Raises
    `BoundaryDegeneracyError` when x is within 1e-9 of a kink.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (cs.dim,):
        raise DimensionMismatchError(f"point has shape {x.shape}, set needs ({cs.dim},)")
    tag = cs.tag
    if tag in (SUBSPACE, POLY_SUBSPACE):
        U = cs.basis
        return JacobianMatrix(entries=U @ U.T, exactness=CLOSED_FORM)
    if tag == ORTHANT:
        if np.min(np.abs(x)) < 1e-9:
            raise BoundaryDegeneracyError("a coordinate sits on the orthant boundary")
        return JacobianMatrix(entries=np.diag((x > 0).astype(float)),
                              exactness=CLOSED_FORM)
    if tag == MONOTONE:
        res = project(cs, x)
        vals = [res.point[a] for a, _ in res.blocks]
        if len(vals) > 1 and np.min(np.diff(vals)) < 1e-9 * (1.0 + np.abs(x).max()):
            raise BoundaryDegeneracyError("adjacent fitted blocks are about to merge")
        return JacobianMatrix(entries=_monotone_jacobian_from_blocks(cs.dim, res.blocks),
                              exactness=CLOSED_FORM)
    if tag == CIRCULAR:
        _check_circular_degeneracy(x, cs.half_angle)
        return JacobianMatrix(entries=_fd_jacobian(cs, x, fd_step),
                              exactness=FINITE_DIFFERENCE)
    if tag == PRODUCT_CIRCULAR:
        _check_circular_degeneracy(x[:-1], cs.half_angle)
        return JacobianMatrix(entries=_fd_jacobian(cs, x, fd_step),
                              exactness=FINITE_DIFFERENCE)
    if tag == K_MONOTONE:
        if cs.order == 0:
            return jacobian(monotone(cs.dim), x, fd_step)
        res = project(cs, x)
        g = np.diff(res.point, cs.order + 1)
        scale = 1.0 + np.abs(x).max()
        near = (np.abs(g) > 1e-9 * scale) & (np.abs(g) < 1e-7 * scale)
        if np.any(near):
            raise BoundaryDegeneracyError("a difference constraint is weakly active")
        return JacobianMatrix(entries=_fd_jacobian(cs, x, fd_step),
                              exactness=FINITE_DIFFERENCE)
    if tag == L1_IMAGE:
        theta0 = _lasso_ops(cs).theta_ls(x[None, :])[0]
        if abs(np.abs(theta0).sum() - cs.radius) < 1e-9 * (1.0 + cs.radius):
            raise BoundaryDegeneracyError("unconstrained fit sits on the l1 sphere")
        return JacobianMatrix(entries=_fd_jacobian(cs, x, fd_step),
                              exactness=FINITE_DIFFERENCE)
    if tag == PRODUCT:
        blocks = []
        exact = CLOSED_FORM
        off = 0
        out = np.zeros((cs.dim, cs.dim))
        for part in cs.parts:
            jac = jacobian(part, x[off:off + part.dim], fd_step)
            out[off:off + part.dim, off:off + part.dim] = jac.entries
            if jac.exactness == FINITE_DIFFERENCE:
                exact = FINITE_DIFFERENCE
            off += part.dim
        return JacobianMatrix(entries=out, exactness=exact)
    raise ValueError(f"unknown tag {tag!r}")
