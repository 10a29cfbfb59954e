"""Command-line interface.

Subcommands: project, statdim, gamma, calibrate, test, predict, diagnose,
reproduce.  Single results print as canonical JSON (sorted keys, 12
significant digits); grids print as CSV.  Exit codes: 0 success, 1
numerical failure, 2 usage error, 3 config-file schema violation.
The effective master seed is echoed in every machine-readable output.
"""

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import conic, diagnostics, experiments, geometry as geo, lrt
from .rng import resolve_workers

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3


def parse_vector(text):
    """Comma-separated literals, or @file.csv."""
    if text.startswith("@"):
        try:
            return np.loadtxt(text[1:], delimiter=",", dtype=float).ravel()
        except OSError as exc:
            raise argparse.ArgumentTypeError(f"cannot read vector file: {exc}")
    try:
        return np.array([float(tok) for tok in text.split(",") if tok != ""])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad vector literal {text!r}")


def parse_matrix(text):
    if not text.startswith("@"):
        raise argparse.ArgumentTypeError("matrices must be given as @file.csv")
    try:
        return np.atleast_2d(np.loadtxt(text[1:], delimiter=",", dtype=float))
    except OSError as exc:
        raise argparse.ArgumentTypeError(f"cannot read matrix file: {exc}")


def build_set(args):
    tag = args.set
    n = args.dim
    if tag == "orthant":
        return geo.orthant(n)
    if tag == "monotone":
        return geo.monotone(n)
    if tag == "circular":
        return geo.circular(n, args.angle)
    if tag == "product-circular":
        return geo.product_circular(n, args.angle)
    if tag == "k-monotone":
        return geo.k_monotone(n, args.order)
    if tag == "poly-subspace":
        return geo.poly_subspace(n, args.degree)
    if tag == "subspace":
        if args.basis is None:
            raise argparse.ArgumentTypeError("--set subspace needs --basis @file")
        return geo.subspace(args.basis)
    if tag == "l1-image":
        if args.design is None or args.radius is None:
            raise argparse.ArgumentTypeError(
                "--set l1-image needs --design @file and --radius")
        return geo.l1_image(args.design, args.radius)
    raise argparse.ArgumentTypeError(f"unknown set {tag!r}")


def parse_null(text, cs):
    """`point:<vector>` or `subspace:poly:<degree>`."""
    if text.startswith("point:"):
        return lrt.point_null(parse_vector(text[len("point:"):]))
    if text.startswith("subspace:poly:"):
        degree = int(text.rsplit(":", 1)[1])
        return lrt.subspace_null(geo.poly_subspace(cs.dim, degree))
    raise argparse.ArgumentTypeError(
        f"bad null argument {text!r}; use point:<vec> or subspace:poly:<k>")


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return float(f"{x:.12g}")
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def render_output(result, fmt="json"):
    """Canonical text form of a result: sorted-key JSON with floats at 12
    significant digits, or the power-curve CSV for point lists."""
    if fmt == "csv":
        return experiments.csv_string(result)
    return json.dumps(_jsonable(result), sort_keys=True)


def _emit(args, payload):
    doc = _jsonable(payload)
    if isinstance(doc, dict):
        doc.setdefault("seed", getattr(args, "seed", 0))
    print(json.dumps(doc, sort_keys=True))


def _add_set_args(sub):
    sub.add_argument("--set", required=True,
                     choices=["orthant", "monotone", "circular", "product-circular",
                              "k-monotone", "subspace", "poly-subspace", "l1-image"])
    sub.add_argument("--dim", type=int, required=True)
    sub.add_argument("--angle", type=float, default=math.pi / 4,
                     help="half-angle for circular cones (radians)")
    sub.add_argument("--order", type=int, default=1, help="k-monotone order")
    sub.add_argument("--degree", type=int, default=1, help="poly-subspace degree")
    sub.add_argument("--basis", type=parse_matrix, default=None)
    sub.add_argument("--design", type=parse_matrix, default=None)
    sub.add_argument("--radius", type=float, default=None)


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--format", choices=["json", "csv"], default="json")


def make_parser():
    parser = argparse.ArgumentParser(
        prog="conelrt",
        description="Likelihood-ratio testing under closed convex constraints")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("project", help="metric projection of a point")
    _add_set_args(p)
    _add_common(p)
    p.add_argument("--point", type=parse_vector, required=True)

    p = subs.add_parser("statdim", help="Monte-Carlo conic summary")
    _add_set_args(p)
    _add_common(p)
    p.add_argument("--reps", type=int, default=20000)

    p = subs.add_parser("gamma", help="shifted-projection moment gap")
    _add_set_args(p)
    _add_common(p)
    p.add_argument("--nu", type=parse_vector, required=True)
    p.add_argument("--p", type=int, choices=[1, 2], default=2)
    p.add_argument("--reps", type=int, default=20000)

    p = subs.add_parser("calibrate", help="null moments of the statistic")
    _add_set_args(p)
    _add_common(p)
    p.add_argument("--null", required=True)
    p.add_argument("--reps", type=int, default=20000)
    p.add_argument("--mode", choices=[lrt.MONTE_CARLO, lrt.CLOSED_FORM],
                   default=lrt.MONTE_CARLO)

    p = subs.add_parser("test", help="calibrate and decide on an observation")
    _add_set_args(p)
    _add_common(p)
    p.add_argument("--null", required=True)
    p.add_argument("--observation", type=parse_vector, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sided", choices=["one", "two"], default="two")
    p.add_argument("--reps", type=int, default=20000)
    p.add_argument("--mode", choices=[lrt.MONTE_CARLO, lrt.CLOSED_FORM],
                   default=lrt.MONTE_CARLO)

    p = subs.add_parser("predict", help="predicted power at an alternative")
    _add_set_args(p)
    _add_common(p)
    p.add_argument("--null", required=True)
    p.add_argument("--mu", type=parse_vector, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sided", choices=["one", "two"], default="two")
    p.add_argument("--reps", type=int, default=20000)

    p = subs.add_parser("diagnose", help="distributional and identity checks")
    _add_set_args(p)
    _add_common(p)
    p.add_argument("--check", required=True,
                   choices=["bound", "identities", "iso-band", "ks-null"])
    p.add_argument("--null", default=None)
    p.add_argument("--mu", type=parse_vector, default=None)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--reference", choices=["std-normal", "chi-squared"],
                   default="std-normal")
    p.add_argument("--slope", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=0.1)

    p = subs.add_parser("reproduce", help="run a scenario from a JSON config")
    p.add_argument("scenario", choices=list(experiments.SCENARIOS))
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config master seed")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    return parser


def _sidedness(arg):
    return lrt.ONE_SIDED if arg == "one" else lrt.TWO_SIDED


def _cmd_project(args):
    cs = build_set(args)
    res = geo.project(cs, args.point)
    payload = {"point": res.point, "face_dim": res.face_dim, "seed": args.seed}
    if res.blocks is not None:
        payload["blocks"] = [list(b) for b in res.blocks]
    if res.kkt_residual is not None:
        payload["kkt_residual"] = res.kkt_residual
        payload["iterations"] = res.iterations
    _emit(args, payload)


def _cmd_statdim(args):
    cs = build_set(args)
    summary = conic.estimate_conic_summary(cs, args.reps, args.seed,
                                           workers=resolve_workers(args.workers))
    _emit(args, summary)


def _cmd_gamma(args):
    cs = build_set(args)
    est = conic.estimate_gamma(cs, args.nu, args.p, args.reps, args.seed,
                               workers=resolve_workers(args.workers))
    _emit(args, est)


def _cmd_calibrate(args):
    cs = build_set(args)
    null = parse_null(args.null, cs)
    cal = lrt.calibrate_null(cs, null, reps=args.reps, seed=args.seed,
                             mode=args.mode, workers=resolve_workers(args.workers))
    _emit(args, cal)


def _cmd_test(args):
    cs = build_set(args)
    null = parse_null(args.null, cs)
    cal = lrt.calibrate_null(cs, null, reps=args.reps, seed=args.seed,
                             mode=args.mode, workers=resolve_workers(args.workers))
    plan = lrt.TestPlan(sidedness=_sidedness(args.sided), alpha=args.alpha,
                        calibration=cal)
    stat = lrt.lrs(cs, null, args.observation)
    payload = {
        "statistic": stat,
        "standardized": (stat - cal.m_hat) / cal.sigma_hat,
        "reject": lrt.decide(stat, plan),
        "alpha": args.alpha,
        "sidedness": plan.sidedness,
        "m_hat": cal.m_hat,
        "sigma_hat": cal.sigma_hat,
        "seed": args.seed,
    }
    _emit(args, payload)


def _cmd_predict(args):
    cs = build_set(args)
    null = parse_null(args.null, cs)
    cal = lrt.calibrate_null(cs, null, reps=args.reps, seed=args.seed,
                             workers=resolve_workers(args.workers))
    plan = lrt.TestPlan(sidedness=_sidedness(args.sided), alpha=args.alpha,
                        calibration=cal)
    pred = lrt.predict_power(cs, null, args.mu, plan, args.reps, args.seed,
                             workers=resolve_workers(args.workers))
    _emit(args, pred)


def _cmd_diagnose(args):
    workers = resolve_workers(args.workers)
    if args.check == "iso-band":
        rep = diagnostics.iso_jacobian_band_check(args.dim, args.reps, args.seed,
                                                  slope=args.slope, kappa=args.kappa,
                                                  workers=workers)
        payload = {"min_band_value": rep.min_value, "min_se": rep.min_se,
                   "argmin": list(rep.argmin), "band_halfwidth": rep.band_halfwidth,
                   "row_range": list(rep.row_range), "seed": args.seed}
        _emit(args, payload)
        return
    cs = build_set(args)
    if args.check == "bound":
        if args.null is None:
            raise argparse.ArgumentTypeError("--check bound needs --null")
        null = parse_null(args.null, cs)
        _emit(args, diagnostics.normal_bound_rhs(cs, null, args.reps, args.seed,
                                                 workers=workers))
    elif args.check == "identities":
        mu = args.mu if args.mu is not None else np.zeros(cs.dim)
        checks = diagnostics.identity_checks(cs, mu, args.reps, args.seed,
                                             workers=workers)
        _emit(args, {name: res for name, res in checks.items()})
    elif args.check == "ks-null":
        if args.null is None:
            raise argparse.ArgumentTypeError("--check ks-null needs --null")
        null = parse_null(args.null, cs)
        cal = lrt.calibrate_null(cs, null, reps=max(args.reps, 1000), seed=args.seed,
                                 workers=workers)
        mu_sim = null.mu0 if null.kind == "point" else np.zeros(cs.dim)
        stats = lrt.standardized_stats(cs, null, mu_sim, cal, args.reps,
                                       args.seed + 1, workers=workers)
        if args.reference == "chi-squared":
            if cs.tag not in (geo.SUBSPACE, geo.POLY_SUBSPACE):
                raise argparse.ArgumentTypeError(
                    "chi-squared reference needs a subspace constraint set")
            raw = stats * cal.sigma_hat + cal.m_hat
            rep = diagnostics.ks_distance(raw, diagnostics.CHI_SQUARED,
                                          df=cs.basis.shape[1])
        else:
            rep = diagnostics.ks_distance(stats, diagnostics.STD_NORMAL)
        _emit(args, rep)


def _cmd_reproduce(args):
    config = experiments.load_config(args.config)
    if config.scenario != args.scenario:
        raise experiments.ConfigError(
            f"config is for scenario {config.scenario!r}, not {args.scenario!r}")
    if args.out is not None:
        config.output_dir = args.out
    if args.seed is not None:
        config.master_seed = args.seed
    points, manifest = experiments.run_scenario(
        config, workers=resolve_workers(args.workers))
    if args.format == "csv":
        print(experiments.csv_string(points), end="")
    else:
        print(render_output({"manifest": manifest, "seed": config.master_seed}))


_COMMANDS = {
    "project": _cmd_project,
    "statdim": _cmd_statdim,
    "gamma": _cmd_gamma,
    "calibrate": _cmd_calibrate,
    "test": _cmd_test,
    "predict": _cmd_predict,
    "diagnose": _cmd_diagnose,
    "reproduce": _cmd_reproduce,
}


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except argparse.ArgumentTypeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except experiments.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (geo.DimensionMismatchError, geo.NotAConeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (geo.NonConvergenceError, diagnostics.InsufficientRepsError,
            diagnostics.CostCapExceeded, lrt.CalibrationInvarianceError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
