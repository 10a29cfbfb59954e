"""Config-driven scenario runner.

Each scenario sweeps a parameter grid at one or more ambient dimensions,
calibrates the test once per dimension (the null law does not depend on the
alternative), measures empirical rejection frequencies, and where a mean
shift is available also records the predicted power.  Results go to a CSV
table, a self-contained SVG chart and a JSON manifest whose content hash
pins the outputs; reruns with the same config are byte-identical.
"""

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import conic, geometry as geo, lrt
from .rng import child_rng, mc_collect, mix64

SCENARIOS = ("fig1", "fig2", "counterexamples", "subspace-cone",
             "circular", "lasso", "iso")

CSV_HEADER = ["scenario", "n", "param", "reps", "empirical_power",
              "empirical_se", "predicted_power", "m_hat", "sigma_hat", "seed"]


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    scenario: str
    n_grid: list
    param_grid: list
    alpha: float = 0.05
    reps_power: int = 1000
    reps_calibration: int = 20000
    master_seed: int = 0
    output_dir: str = "."
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if not self.n_grid or not self.param_grid:
            raise ConfigError("n_grid and param_grid must be nonempty")
        if min(self.reps_power, self.reps_calibration) < 100:
            raise ConfigError("replication counts must be >= 100")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        return self


_CONFIG_FIELDS = {"scenario": str, "n_grid": list, "param_grid": list,
                  "alpha": (int, float), "reps_power": int,
                  "reps_calibration": int, "master_seed": int,
                  "output_dir": str, "extra": dict}


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - set(_CONFIG_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "scenario" not in doc or "n_grid" not in doc or "param_grid" not in doc:
        raise ConfigError("config needs scenario, n_grid and param_grid")
    for key, typ in _CONFIG_FIELDS.items():
        if key in doc and not isinstance(doc[key], typ):
            raise ConfigError(f"config key {key!r} has the wrong type")
    return ScenarioConfig(**doc).validate()


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


@dataclass
class PowerCurvePoint:
    scenario: str                 # scenario tag, optionally "<scenario>:<curve>"
    n: int
    param: float
    reps: int
    empirical_power: float
    empirical_se: float
    predicted_power: float        # None when no prediction applies
    m_hat: float
    sigma_hat: float
    seed: int


def _point_shift_mean(cs, null, mu, reps, seed, workers=None):
    """Common-random-number estimate of the mean shift of the statistic."""
    mu = np.asarray(mu, dtype=float)
    mu0 = null.mu0

    def block(xi, start):
        d = conic.lrs_rows(cs, null, mu + xi) - conic.lrs_rows(cs, null, mu0 + xi)
        return {"d": d}, {}

    per, _ = mc_collect(cs.dim, reps, seed, block, workers=workers)
    return float(per["d"].mean())


def per_coordinate_lrs_variance(level, reps, seed):
    """One-coordinate variance of the orthant LRS term at the given level,
    under the all-ones null: var[(level - 1 + z)^2 - min(level + z, 0)^2]."""
    z = child_rng(seed, 0).standard_normal(reps)
    y = level + z
    g = (y - 1.0) ** 2 - np.minimum(y, 0.0) ** 2
    return float(g.var(ddof=1))


def run_scenario(config, workers=None):
    """Execute one scenario; writes CSV, SVG and manifest to the output dir.

    Returns (points, manifest).  On failure, whatever points exist are
    flushed with a failure marker in the manifest before the error
    propagates.
    """
    config.validate()
    os.makedirs(config.output_dir, exist_ok=True)
    runner = {
        "fig1": _run_fig1,
        "fig2": _run_fig2,
        "counterexamples": _run_counterexamples,
        "subspace-cone": _run_subspace_cone,
        "circular": _run_circular,
        "lasso": _run_lasso,
        "iso": _run_iso,
    }[config.scenario]
    try:
        points, notes = runner(config, workers)
    except Exception as exc:
        _write_outputs(config, [], {}, failed=f"{type(exc).__name__}: {exc}")
        raise
    manifest = _write_outputs(config, points, notes)
    return points, manifest


def _cal_seed(config, idx):
    return mix64(config.master_seed, 500 + idx)


def _point_seed(config, idx):
    return mix64(config.master_seed, 1000 + idx)


def _pred_seed(config, idx):
    return mix64(config.master_seed, 4000 + idx)


def _plan(config, cal, sided=lrt.TWO_SIDED):
    return lrt.TestPlan(sidedness=sided, alpha=config.alpha, calibration=cal)


def _run_fig1(config, workers):
    points = []
    idx = 0
    for ni, n in enumerate(config.n_grid):
        cs = geo.orthant(n)
        null = lrt.point_null(np.zeros(n))
        cal = lrt.calibrate_null(cs, null, reps=config.reps_calibration,
                                 seed=_cal_seed(config, ni), workers=workers)
        plan = _plan(config, cal)
        idx_grid = np.arange(1, n + 1, dtype=float)
        for curve, make_mu in (("flat", lambda q: np.full(n, 2.0 * n ** (-q))),
                               ("decay", lambda q: idx_grid ** (-q))):
            for q in config.param_grid:
                mu = make_mu(float(q))
                seed = _point_seed(config, idx)
                p, se = lrt.empirical_power(cs, null, mu, plan,
                                            config.reps_power, seed, workers=workers)
                points.append(PowerCurvePoint(
                    scenario=f"fig1:{curve}", n=n, param=float(q),
                    reps=config.reps_power, empirical_power=p, empirical_se=se,
                    predicted_power=None, m_hat=cal.m_hat,
                    sigma_hat=cal.sigma_hat, seed=seed))
                idx += 1
    return points, {}


def _run_fig2(config, workers):
    n = config.n_grid[-1]
    q = float(config.extra.get("decay", 0.3))
    family = config.extra.get("family", "flat")
    cs = geo.orthant(n)
    null = lrt.point_null(np.zeros(n))
    cal = lrt.calibrate_null(cs, null, reps=config.reps_calibration,
                             seed=_cal_seed(config, 0), workers=workers)
    plan = _plan(config, cal)
    idx_grid = np.arange(1, n + 1, dtype=float)
    points = []
    for k, tau in enumerate(config.param_grid):
        tau = float(tau)
        mu = np.full(n, tau * n ** (-q)) if family == "flat" else tau * idx_grid ** (-q)
        seed = _point_seed(config, k)
        p, se = lrt.empirical_power(cs, null, mu, plan, config.reps_power,
                                    seed, workers=workers)
        gamma = conic.estimate_gamma(cs, mu, 2, config.reps_calibration,
                                     _pred_seed(config, 0), workers=workers)
        pred = lrt.delta_power(plan.sidedness, plan.alpha, gamma.value / cal.sigma_hat)
        points.append(PowerCurvePoint(
            scenario=f"fig2:{family}", n=n, param=tau, reps=config.reps_power,
            empirical_power=p, empirical_se=se, predicted_power=pred,
            m_hat=cal.m_hat, sigma_hat=cal.sigma_hat, seed=seed))
    return points, {"decay": q, "family": family}


def _run_counterexamples(config, workers):
    n = config.n_grid[-1]
    c1 = float(config.extra.get("c1", 0.9))
    oracle_reps = int(config.extra.get("oracle_reps", 2_000_000))
    var_reps = int(config.extra.get("reps_variance", max(config.reps_power, 2000)))
    cs = geo.orthant(n)
    mu0 = np.ones(n)
    null = lrt.point_null(mu0)
    cal = lrt.calibrate_null(cs, null, reps=config.reps_calibration,
                             seed=_cal_seed(config, 0), workers=workers)
    c0 = lrt.find_c0()
    points = []

    stats = lrt.standardized_stats(cs, null, c0 * mu0, cal, var_reps,
                                   _point_seed(config, 0), workers=workers)
    var_hat = float(stats.var(ddof=1))
    from .rng import batch_jackknife_se
    var_se = batch_jackknife_se(stats, lambda a: np.var(a, ddof=1))
    rho_c0 = per_coordinate_lrs_variance(c0, oracle_reps, _pred_seed(config, 1))
    rho_1 = per_coordinate_lrs_variance(1.0, oracle_reps, _pred_seed(config, 2))

    for k, (sided, level) in enumerate((
            (lrt.ONE_SIDED, c1), (lrt.TWO_SIDED, c1),
            (lrt.ONE_SIDED, c0), (lrt.TWO_SIDED, c0))):
        plan = _plan(config, cal, sided)
        seed = _point_seed(config, 10 + k)
        p, se = lrt.empirical_power(cs, null, level * mu0, plan,
                                    config.reps_power, seed, workers=workers)
        points.append(PowerCurvePoint(
            scenario=f"counterexamples:{sided}", n=n, param=level,
            reps=config.reps_power, empirical_power=p, empirical_se=se,
            predicted_power=None, m_hat=cal.m_hat, sigma_hat=cal.sigma_hat,
            seed=seed))
    notes = {
        "c0": c0, "c1": c1, "gap_at_c1": lrt.counter_f(c1),
        "variance_of_standardized_statistic": var_hat,
        "variance_se": var_se,
        "predicted_variance_ratio": rho_c0 / rho_1,
        "per_coordinate_variance_at_c0": rho_c0,
        "per_coordinate_variance_at_1": rho_1,
        "variance_reps": var_reps,
    }
    return points, notes


def _cone_direction(n, order):
    """Unit vector in the k-monotone cone, orthogonal to the polynomial null."""
    t = np.arange(1, n + 1, dtype=float)
    raw = t if order == 0 else (t - t.mean()) ** 2
    k0 = geo.poly_subspace(n, order)
    U = k0.basis
    d = raw - U @ (U.T @ raw)
    return d / np.linalg.norm(d)


def _run_subspace_cone(config, workers):
    n = config.n_grid[-1]
    orders = config.extra.get("orders", [0, 1])
    points = []
    for oi, k in enumerate(orders):
        cs = geo.k_monotone(n, int(k))
        k0 = geo.poly_subspace(n, int(k))
        null = lrt.subspace_null(k0)
        cal = lrt.calibrate_null(cs, null, reps=config.reps_calibration,
                                 seed=_cal_seed(config, oi), workers=workers)
        plan = _plan(config, cal)
        direction = _cone_direction(n, int(k))
        for j, s in enumerate(config.param_grid):
            s = float(s)
            mu = s * direction
            seed = _point_seed(config, 100 * oi + j)
            p, se = lrt.empirical_power(cs, null, mu, plan, config.reps_power,
                                        seed, workers=workers)
            gamma = conic.estimate_gamma(cs, mu, 2, min(config.reps_calibration, 4000),
                                         _pred_seed(config, oi), workers=workers)
            pred = lrt.delta_power(plan.sidedness, plan.alpha,
                                   gamma.value / cal.sigma_hat)
            points.append(PowerCurvePoint(
                scenario=f"subspace-cone:order{k}", n=n, param=s,
                reps=config.reps_power, empirical_power=p, empirical_se=se,
                predicted_power=pred, m_hat=cal.m_hat, sigma_hat=cal.sigma_hat,
                seed=seed))
    return points, {"orders": list(orders)}


def _run_circular(config, workers):
    n = config.n_grid[-1]
    angle = float(config.extra.get("half_angle", math.pi / 6))
    points = []
    setups = (("axis", geo.circular(n, angle), 0),
              ("product-last", geo.product_circular(n, angle), n - 1))
    for si, (curve, cs, coord) in enumerate(setups):
        null = lrt.point_null(np.zeros(n))
        cal = lrt.calibrate_null(cs, null, reps=config.reps_calibration,
                                 seed=_cal_seed(config, si), workers=workers)
        plan = _plan(config, cal)
        for j, s in enumerate(config.param_grid):
            s = float(s)
            mu = np.zeros(n)
            mu[coord] = s
            seed = _point_seed(config, 100 * si + j)
            p, se = lrt.empirical_power(cs, null, mu, plan, config.reps_power,
                                        seed, workers=workers)
            shift = _point_shift_mean(cs, null, mu, min(config.reps_calibration, 4000),
                                      _pred_seed(config, 100 * si + j), workers=workers)
            pred = lrt.delta_power(plan.sidedness, plan.alpha, shift / cal.sigma_hat)
            points.append(PowerCurvePoint(
                scenario=f"circular:{curve}", n=n, param=s,
                reps=config.reps_power, empirical_power=p, empirical_se=se,
                predicted_power=pred, m_hat=cal.m_hat, sigma_hat=cal.sigma_hat,
                seed=seed))
    return points, {"half_angle": angle}


def lasso_design(n, p, seed):
    """Deterministic design with orthonormal columns."""
    rng = child_rng(seed, 0)
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return q[:, :p]


def lasso_radius(design, theta0_l1, const):
    n, p = design.shape
    sigma = design.T @ design / n
    lam_min = float(np.linalg.eigvalsh(sigma).min())
    return theta0_l1 + const * math.sqrt(p * math.log(n) / (n * lam_min))


def _run_lasso(config, workers):
    n = config.n_grid[-1]
    p = int(config.extra.get("p", 50))
    const = float(config.extra.get("lambda_const", 4.0))
    X = lasso_design(n, p, mix64(config.master_seed, 9000))
    radius = lasso_radius(X, 0.0, const)
    cs = geo.l1_image(X, radius)
    null = lrt.point_null(np.zeros(n))
    cal = lrt.calibrate_null(cs, null, reps=config.reps_calibration,
                             seed=_cal_seed(config, 0), workers=workers)
    plan = _plan(config, cal)
    points = []
    for j, s in enumerate(config.param_grid):
        s = float(s)
        theta = np.zeros(p)
        theta[0] = s * p ** 0.25
        mu = X @ theta
        seed = _point_seed(config, j)
        power, se = lrt.empirical_power(cs, null, mu, plan, config.reps_power,
                                        seed, workers=workers)
        shift = _point_shift_mean(cs, null, mu, min(config.reps_calibration, 4000),
                                  _pred_seed(config, j), workers=workers)
        pred = lrt.delta_power(plan.sidedness, plan.alpha, shift / cal.sigma_hat)
        points.append(PowerCurvePoint(
            scenario="lasso", n=n, param=s, reps=config.reps_power,
            empirical_power=power, empirical_se=se, predicted_power=pred,
            m_hat=cal.m_hat, sigma_hat=cal.sigma_hat, seed=seed))
    return points, {"p": p, "radius": radius, "lambda_const": const}


def iso_local_alternative(n, wiggle):
    """Grids of the ramp null and its local alternative.

    The null is f0(t) = t on the equispaced grid; the alternative bends it
    by rho * delta with delta(t) = 2 sqrt(3) (t - 1/2), the unit-norm
    linear bump whose slope stays away from 0 and infinity, where rho =
    wiggle * n^(-5/12).  The alternative must stay increasing, which caps
    wiggle * n^(-5/12) below 1/(2 sqrt(3)).
    """
    t = np.arange(1, n + 1, dtype=float) / n
    rho = wiggle * n ** (-5.0 / 12.0)
    if rho * 2.0 * math.sqrt(3.0) >= 1.0:
        raise ConfigError(f"wiggle {wiggle} leaves the monotone cone at n={n}")
    delta = 2.0 * math.sqrt(3.0) * (t - 0.5)
    return t, t - rho * delta


def _run_iso(config, workers):
    points = []
    for ni, n in enumerate(config.n_grid):
        cs = geo.monotone(n)
        mu0, _ = iso_local_alternative(n, 0.0)
        null = lrt.point_null(mu0)
        cal = lrt.calibrate_null(cs, null, reps=config.reps_calibration,
                                 seed=_cal_seed(config, ni), workers=workers)
        plan = _plan(config, cal)
        for j, w in enumerate(config.param_grid):
            w = float(w)
            _, mu = iso_local_alternative(n, w)
            seed = _point_seed(config, 100 * ni + j)
            p, se = lrt.empirical_power(cs, null, mu, plan, config.reps_power,
                                        seed, workers=workers)
            shift = _point_shift_mean(cs, null, mu, min(config.reps_calibration, 4000),
                                      _pred_seed(config, 100 * ni + j), workers=workers)
            pred = lrt.delta_power(plan.sidedness, plan.alpha, shift / cal.sigma_hat)
            points.append(PowerCurvePoint(
                scenario="iso", n=n, param=w, reps=config.reps_power,
                empirical_power=p, empirical_se=se, predicted_power=pred,
                m_hat=cal.m_hat, sigma_hat=cal.sigma_hat, seed=seed))
    notes = {"alternative": "f0(t)=t bent by rho*delta, delta(t)=2*sqrt(3)*(t-1/2), "
                            "rho = param * n^(-5/12)"}
    return points, notes


# ---------------------------------------------------------------------------
# output files

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def emit_csv(points, path):
    """Write the power-curve table; RFC-4180 quoting, 12 significant digits,
    empty field (not NaN) for absent predictions."""
    if not points:
        raise ValueError("no points to write")
    with open(path, "w", newline="") as fh:
        _write_csv(points, fh)
    return path


def _write_csv(points, fh):
    writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for pt in points:
        writer.writerow([
            pt.scenario, pt.n, _fmt(float(pt.param)), pt.reps,
            _fmt(pt.empirical_power), _fmt(pt.empirical_se),
            _fmt(pt.predicted_power), _fmt(pt.m_hat), _fmt(pt.sigma_hat),
            pt.seed,
        ])


def csv_string(points):
    buf = io.StringIO()
    _write_csv(points, buf)
    return buf.getvalue()


_PALETTE = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def emit_svg(points, path, width=640, height=480):
    """Self-contained line chart: one polyline per curve (plus a dashed
    companion for predicted power), axes, ticks and a legend."""
    if not points:
        raise ValueError("no points to plot")
    with open(path, "w") as fh:
        fh.write(svg_string(points, width, height))
    return path


def svg_string(points, width=640, height=480):
    ml, mr, mt, mb = 60, 20, 20, 45
    iw, ih = width - ml - mr, height - mt - mb
    xs = [float(p.param) for p in points]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi - x_lo < 1e-12:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5

    def tx(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * iw

    def ty(y):
        return mt + (1.0 - y) * ih

    curves = {}
    for p in points:
        curves.setdefault(p.scenario, []).append(p)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{ml}" y1="{ty(0)}" x2="{ml + iw}" y2="{ty(0)}" stroke="black"/>',
           f'<line x1="{ml}" y1="{ty(0)}" x2="{ml}" y2="{ty(1)}" stroke="black"/>']
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = ty(frac)
        out.append(f'<line x1="{ml - 4}" y1="{y:.2f}" x2="{ml}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{y + 4:.2f}" font-size="11" '
                   f'text-anchor="end">{frac:g}</text>')
    for k in range(5):
        xv = x_lo + k * (x_hi - x_lo) / 4
        x = tx(xv)
        out.append(f'<line x1="{x:.2f}" y1="{ty(0)}" x2="{x:.2f}" y2="{ty(0) + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{ty(0) + 16}" font-size="11" '
                   f'text-anchor="middle">{xv:.3g}</text>')
    out.append(f'<text x="{ml + iw / 2}" y="{height - 8}" font-size="12" '
               f'text-anchor="middle">parameter</text>')
    out.append(f'<text x="14" y="{mt + ih / 2}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ih / 2})">rejection rate</text>')

    legend_y = mt + 8
    for ci, (name, pts) in enumerate(curves.items()):
        pts = sorted(pts, key=lambda p: float(p.param))
        color = _PALETTE[ci % len(_PALETTE)]
        emp = " ".join(f"{tx(float(p.param)):.2f},{ty(p.empirical_power):.2f}" for p in pts)
        out.append(f'<polyline points="{emp}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for p in pts:
            out.append(f'<circle cx="{tx(float(p.param)):.2f}" '
                       f'cy="{ty(p.empirical_power):.2f}" r="2.5" fill="{color}"/>')
        out.append(f'<line x1="{ml + iw - 150}" y1="{legend_y}" x2="{ml + iw - 130}" '
                   f'y2="{legend_y}" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{ml + iw - 125}" y="{legend_y + 4}" '
                   f'font-size="11">{name}</text>')
        legend_y += 16
        if any(p.predicted_power is not None for p in pts):
            pred = " ".join(f"{tx(float(p.param)):.2f},{ty(p.predicted_power):.2f}"
                            for p in pts if p.predicted_power is not None)
            pcolor = _PALETTE[(ci + 1) % len(_PALETTE)]
            out.append(f'<polyline points="{pred}" fill="none" stroke="{pcolor}" '
                       f'stroke-width="1.5" stroke-dasharray="5,3"/>')
            out.append(f'<line x1="{ml + iw - 150}" y1="{legend_y}" x2="{ml + iw - 130}" '
                       f'y2="{legend_y}" stroke="{pcolor}" stroke-width="1.5" '
                       f'stroke-dasharray="5,3"/>')
            out.append(f'<text x="{ml + iw - 125}" y="{legend_y + 4}" '
                       f'font-size="11">{name} (predicted)</text>')
            legend_y += 16
    out.append("</svg>")
    return "\n".join(out)


def _write_outputs(config, points, notes, failed=None):
    base = os.path.join(config.output_dir, config.scenario)
    manifest = {"config": asdict(config), "notes": notes,
                "points": [asdict(p) for p in points]}
    if failed is not None:
        manifest["failed"] = failed
    if points:
        emit_csv(points, base + ".csv")
        emit_svg(points, base + ".svg")
        with open(base + ".csv", "rb") as fh:
            manifest["csv_sha256"] = hashlib.sha256(fh.read()).hexdigest()
        with open(base + ".svg", "rb") as fh:
            manifest["svg_sha256"] = hashlib.sha256(fh.read()).hexdigest()
    with open(os.path.join(config.output_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
