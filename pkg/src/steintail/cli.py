"""Batch command-line runner.

Exit codes: 0 pass, 1 configuration error, 2 verification failure,
3 budget exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import ndtr
from jsonschema import Draft202012Validator
from jsonschema.exceptions import ValidationError
from referencing import Registry, Resource

from . import chaos_lab as cl
from . import gaussian_stein as gs
from . import polymer_sim as ps
from . import tail_engine as te

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_BUDGET = 0, 1, 2, 3

STEIN_HELP = """\
output: stein_check_z<z>.csv per threshold, columns
  x          grid point
  f          Stein solution for h = 1{x <= z}
  f_left     left derivative f'(x-)
  f_right    right derivative f'(x+)
  residual   f_left - x f - (1{x <= z} - P[Z <= z])
"""

TAIL_HELP = """\
output: tail_report.csv and tail_report.json, columns
  x                abscissa
  tail             P[X > x] reconstructed from g
  density          density of X at x
  corA_A           K A(x)/x lower bound (needs c_prime)
  corA_gaussian    K exp(-x^2/2)/x lower bound (needs c_prime, g >= 1)
  normal_tail      standard normal tail, for reference
  stein_lower      ((1+x^2)/(1+(2c'+1)x^2)) normal tail (needs c_prime)
  upper_DX         exp(-x^2/2)
  upper_G          (1+1/x^2) normal tail
  violation_flag   1 when a binding envelope is crossed at x
"""

CHAOS_HELP = """\
output: chaos_<suite>.json with verification records {lhs, rhs, se, n, seed, ...};
the gee suite also writes gee_tail_config.json, a valid config for `tail`.
"""

POLYMER_HELP = """\
outputs:
  variance.csv  t, n_env, var, var_se, lower_bound, upper_bound, violation
  tail.csv      a, empirical, dkw_lo, dkw_hi, ld_upper, ld2_lower
                (P[|log u - mean| > a sqrt(t)] at t = tail_t)
  gee.csv       env, G, overlap   (action gee)
  summary.json  fit of the fluctuation exponent and all checks
"""


class ConfigError(ValueError):
    pass


def fmt(v) -> str:
    return te.fmt(v)


def _registry() -> Registry:
    pairs = []
    for entry in resources.files("steintail").joinpath("schemas").iterdir():
        if entry.name.endswith(".json"):
            pairs.append((entry.name, Resource.from_contents(json.loads(entry.read_text()))))
    return Registry().with_resources(pairs)


def load_config(path, command: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    schema = json.loads(resources.files("steintail").joinpath("schemas", f"{command}.json").read_text())
    try:
        Draft202012Validator(schema, registry=_registry()).validate(cfg)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    return cfg


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    path.write_text(buf.getvalue())


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return obj


def _write_json(path: Path, obj):
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n")


def _outdir(args, cfg) -> Path:
    out = Path(args.out or cfg.get("output_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg, default=0) -> int:
    return int(args.seed if args.seed is not None else cfg.get("seed", default))


def _tol(args, cfg, default):
    return float(args.tol if args.tol is not None else cfg.get("tol", default))


# --------------------------------------------------------------------------
# stein


def cmd_stein(args, cfg) -> int:
    tol = _tol(args, cfg, 1e-10)
    g = cfg.get("grid", {"start": -10.0, "stop": 10.0, "num": 10_000})
    x = np.linspace(g["start"], g["stop"], g["num"])
    out = _outdir(args, cfg)
    worst = 0.0
    for z in cfg["z_list"]:
        f = gs.stein_solution(z, x)
        fl = gs.stein_derivative_left(z, x)
        fr = gs.stein_derivative_right(z, x)
        res = fl - x * f - ((x <= z).astype(float) - ndtr(z))
        worst = max(worst, float(np.max(np.abs(res))))
        _write_csv(
            out / f"stein_check_z{fmt(float(z))}.csv",
            ["x", "f", "f_left", "f_right", "residual"],
            zip(x, f, fl, fr, res),
        )
    print(f"max |residual| = {worst:.3e} (tol {tol:.1e})")
    return EXIT_OK if worst < tol else EXIT_VERIFY


# --------------------------------------------------------------------------
# tail


def cmd_tail(args, cfg) -> int:
    tol = _tol(args, cfg, te.DEFAULT_TOL)
    g = te.GFunctionSpec.from_dict(cfg["g"])
    out = _outdir(args, cfg)
    report = te.build_tail_report(
        g,
        float(cfg["mean_abs"]),
        cfg["x_grid"],
        c_prime=cfg.get("c_prime"),
        z0=cfg.get("z0"),
        tol=tol,
    )
    (out / "tail_report.csv").write_text(report.to_csv())
    (out / "tail_report.json").write_text(report.to_json() + "\n")
    for name, x in report.violations:
        print(f"violation: {name} at x = {x:g}")
    return EXIT_OK if not report.violations else EXIT_VERIFY


# --------------------------------------------------------------------------
# chaos


def _w(dim, i, deg=1):
    return cl.ChaosRV.coordinate(dim, i, deg)


def _default_rvs(suite):
    w1, h2 = _w(1, 0), _w(1, 0, 2)
    if suite == "subgauss":
        s = 1.0 / math.sqrt(2.0)
        return [w1, cl.ChaosRV(2, {(1, 0): s, (0, 1): s})]
    if suite == "gee":
        return [h2]
    return [w1, h2, w1 + h2]


def cmd_chaos(args, cfg) -> int:
    suite = cfg["suite"]
    seed = _seed(args, cfg)
    rvs = [cl.ChaosRV.from_dict(d) for d in cfg["rvs"]] if "rvs" in cfg else _default_rvs(suite)
    records = []
    ok = True
    if suite == "lemkey":
        n = int(cfg.get("n", 1_000_000))
        for i, rv in enumerate(rvs):
            for h in cfg.get("h", ["identity", "tanh"]):
                chk = cl.verify_lemkey(rv, h, n, seed + i)
                records.append({"rv": rv.to_dict(), "h": h, **chk.to_dict()})
                ok &= chk.passed
    elif suite == "lemsko":
        if "pairs" in cfg:
            pairs = [(cl.ChaosRV.from_dict(a), cl.ChaosRV.from_dict(b)) for a, b in cfg["pairs"]]
        else:
            d2 = lambda i, k=1: _w(2, i, k)  # noqa: E731
            pairs = [(d2(0, 2), d2(0, 2)), (d2(0, 2), d2(0, 1)), (d2(0), d2(1)), (d2(0, 2), d2(0, 2) + d2(1, 3))]
        n = int(cfg.get("n", 200_000))
        for i, (f, y) in enumerate(pairs):
            chk = cl.verify_lemsko(f, y, n, seed + i)
            records.append({"fn": f.to_dict(), "Y": y.to_dict(), **chk.to_dict()})
            ok &= chk.passed
    elif suite == "mehler":
        n = int(cfg.get("n", 20_000))
        nodes = int(cfg.get("theta_nodes", 32))
        for i, rv in enumerate(rvs):
            for p in cfg.get("points", [-1.3, 0.0, 0.7]):
                est = cl.mehler_minus_DL_inv(rv, nodes, n, seed + i, w=np.full(rv.dim, p))
                records.append(
                    {
                        "rv": rv.to_dict(),
                        "w": list(est.w),
                        "estimate": list(est.estimate),
                        "se": list(est.se),
                        "exact": list(est.exact),
                        "passed": est.passed,
                    }
                )
                ok &= est.passed
        records.append(
            {"quadrature_identity": [[k, cl.quadrature_identity(k, nodes), 1.0 / (k + 1)] for k in range(7)]}
        )
    elif suite == "subgauss":
        n = int(cfg.get("n", 200_000))
        u = cfg.get("u_grid", [0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5])
        for i, rv in enumerate(rvs):
            rep = cl.subgaussian_check(rv, u, n, seed + i)
            records.append({"rv": rv.to_dict(), "report": rep.to_dict(), "passed": not rep.violations})
            ok &= not rep.violations
    elif suite == "gee":
        n = int(cfg.get("n", 1_000_000))
        bins = int(cfg.get("bins", 40))
        rv = rvs[0]
        spec = cl.estimate_g(rv, n, bins, seed)
        x = cl.eval_chaos(rv, cl.sample_w(rv.dim, n, cl.rng_for(seed, "mean_abs")))
        mean_abs, mean_abs_se = te.estimate_mean_abs(x)
        lo, hi = spec.grid[0], spec.grid[-1]
        x_grid = cfg.get("x_grid") or [float(v) for v in np.linspace(lo, hi, 9)[1:-1]]
        tail_cfg = {"g": spec.to_dict(), "mean_abs": mean_abs, "x_grid": x_grid}
        out = _outdir(args, cfg)
        _write_json(out / "gee_tail_config.json", tail_cfg)
        records.append({"rv": rv.to_dict(), "mean_abs": mean_abs, "mean_abs_se": mean_abs_se, "g": spec.to_dict()})
    out = _outdir(args, cfg)
    _write_json(out / f"chaos_{suite}.json", {"suite": suite, "seed": seed, "records": records, "passed": ok})
    print(f"chaos {suite}: {'PASS' if ok else 'FAIL'} ({len(records)} records)")
    return EXIT_OK if ok else EXIT_VERIFY


# --------------------------------------------------------------------------
# polymer


def _polymer_run(args, cfg):
    return ps.run_polymer(
        ps.CovarianceSpec.from_dict(cfg["cov"]),
        cfg["t_grid"],
        int(cfg["n_env"]),
        int(cfg["n_b"]),
        float(cfg["dt"]),
        kind=cfg.get("hamiltonian", ps.LINEAR),
        seed=_seed(args, cfg),
        budget=float(cfg.get("budget", ps.DEFAULT_BUDGET)),
        n_jobs=int(args.threads),
    )


def _variance_section(run, out):
    rows = ps.check_variance_bounds(run)
    _write_csv(
        out / "variance.csv",
        ["t", "n_env", "var", "var_se", "lower_bound", "upper_bound", "violation"],
        [(r.t, r.n_env, r.var, r.var_se, r.lower_bound, r.upper_bound, int(r.violation)) for r in rows],
    )
    return rows


def _tail_section(run, cfg, out):
    t = float(cfg.get("tail_t", run.t_grid[-1]))
    a = cfg.get("a_grid", [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0])
    rep = ps.empirical_tail_check(run, t, a)
    env = rep.bound_envelopes
    _write_csv(
        out / "tail.csv",
        ["a", "empirical", "dkw_lo", "dkw_hi", "ld_upper", "ld2_lower"],
        zip(rep.abscissae, rep.tail, env["dkw_lo"], env["dkw_hi"], env["ld_upper"], env["ld2_lower"]),
    )
    return rep


def _gee_section(args, cfg, out):
    gc = cfg.get("gee", {})
    cov = ps.build_covariance(ps.CovarianceSpec.from_dict(cfg["cov"]))
    t = float(gc.get("t", cfg["t_grid"][-1]))
    est = ps.estimate_G_polymer(
        cov,
        t,
        int(gc.get("n_env_prime", 8)),
        int(gc.get("theta_nodes", 16)),
        int(cfg["n_b"]),
        float(cfg["dt"]),
        _seed(args, cfg),
        kind=cfg.get("hamiltonian", ps.LINEAR),
        n_env=int(gc.get("n_env", 50)),
        budget=float(cfg.get("budget", ps.DEFAULT_BUDGET)),
        n_jobs=int(args.threads),
    )
    _write_csv(
        out / "gee.csv",
        ["env", "G", "overlap"],
        [(i, g, o) for i, (g, o) in enumerate(zip(est.per_env, est.overlap))],
    )
    ov = np.asarray(est.overlap)
    ov_se = ov.std(ddof=1) / math.sqrt(ov.size) if ov.size > 1 else 0.0
    diff = np.asarray(est.per_env) - ov
    diff_se = diff.std(ddof=1) / math.sqrt(diff.size) if diff.size > 1 else est.se + ov_se
    linear = cfg.get("hamiltonian", ps.LINEAR) == ps.LINEAR
    in_band = cov.qm - 4 * est.se <= est.estimate <= cov.q0 + 4 * est.se
    below_overlap = est.estimate <= float(ov.mean()) + 4 * diff_se
    summary = {
        "t": t,
        "G": est.estimate,
        "G_se": est.se,
        "overlap_mean": float(ov.mean()),
        "overlap_se": float(ov_se),
        "G_minus_overlap_se": float(diff_se),
        "q0": cov.q0,
        "qm": cov.qm,
        "in_band": bool(in_band) if linear else None,
        "G_le_overlap": bool(below_overlap),
        "n_env": len(est.per_env),
        "n_env_prime": est.n_env_prime,
        "theta_nodes": est.theta_nodes,
    }
    ok = below_overlap and (in_band or not linear)
    return summary, ok


def cmd_polymer(args, cfg) -> int:
    action = args.action
    out = _outdir(args, cfg)
    summary = {"action": action, "config": cfg, "seed": _seed(args, cfg)}
    ok = True
    if action == "gee":
        gsum, ok = _gee_section(args, cfg, out)
        summary["gee"] = gsum
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run = _polymer_run(args, cfg)
        summary["warnings"] = list(run.warnings)
        summary["q0"], summary["qm"] = run.q0, run.qm
        if action in ("run", "bounds"):
            rows = _variance_section(run, out)
            summary["bound_violations"] = [r.t for r in rows if r.violation]
            ok &= not summary["bound_violations"]
        if action in ("run", "tail"):
            rep = _tail_section(run, cfg, out)
            summary["tail_violations"] = rep.violations
            summary["ld2_flags"] = rep.meta["ld2_flags"]
            ok &= not rep.violations
        if action == "run":
            lo, hi = cfg.get("chi_interval", [0.4, 0.6])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    fit = ps.fit_chi(ps.variance_vs_t(run))
                except ValueError as exc:
                    fit = None
                    summary["fit_error"] = str(exc)
            if fit is not None:
                summary["fit"] = fit.to_dict()
                summary["chi_ok"] = bool(lo <= fit.chi <= hi)
                ok &= summary["chi_ok"]
            elif not run.degenerate:
                ok = False
            summary["degenerate"] = run.degenerate
    summary["passed"] = bool(ok)
    _write_json(out / "summary.json", summary)
    print(f"polymer {action}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config file (schema in steintail/schemas)")
    common.add_argument("--out", help="output directory (default: config output_dir or .)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config")
    common.add_argument("--tol", type=float, help="numerical tolerance, overrides the config")
    common.add_argument("--threads", type=int, default=1, help="worker threads")

    raw = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(prog="steintail", description=__doc__, formatter_class=raw)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("stein", parents=[common], epilog=STEIN_HELP, formatter_class=raw,
                   help="check the explicit Stein solution")
    sub.add_parser("tail", parents=[common], epilog=TAIL_HELP, formatter_class=raw,
                   help="tail and density from g with bound envelopes")
    sub.add_parser("chaos", parents=[common], epilog=CHAOS_HELP, formatter_class=raw,
                   help="Wiener-chaos verification suites")
    pp = sub.add_parser("polymer", parents=[common], epilog=POLYMER_HELP, formatter_class=raw,
                        help="directed polymer simulations")
    pp.add_argument("action", choices=["run", "bounds", "tail", "gee"])
    return parser


COMMANDS = {"stein": cmd_stein, "tail": cmd_tail, "chaos": cmd_chaos, "polymer": cmd_polymer}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, cfg)
    except ps.BudgetExceededError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
