"""Command-line entry point.

Every subcommand reads an optional JSON config (--config) plus ``--set
section.key=value`` overrides and writes a run directory:

    <out>/manifest.json   resolved config, seeds, code version
    <out>/...             command outputs (CSV / JSONL / GSQG1)
    <out>/timing.json     wall time (kept out of the manifest so manifests are reproducible)
    <out>/DONE            completion marker

Exit codes: 0 pass, 1 check failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .diagnostics import condition_check
from .ensemble import manifest, run_ensemble, write_run_dir
from .io import (
    read_path_csv,
    read_rows_csv,
    read_trajectory_jsonl,
    write_crossings_csv,
    write_field,
    write_field_csv,
    write_json,
    write_path_csv,
    write_rows_csv,
    write_trajectory_jsonl,
)
from .solver import (
    compare_transform,
    contraction_scaling_experiment,
    integrate_direct,
    integrate_transformed,
    picard_local_solve,
)
from .stochastic import BrownianPath, analytic_crossing_probability, mc_crossing_probability, sample_path
from .verify import run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_config(args) -> RunConfig:
    overrides = list(args.set or [])
    for flag, key in (("nu", "params.nu"), ("alpha", "params.alpha"), ("beta", "params.beta"),
                      ("s", "params.s"), ("sigma", "params.sigma"), ("N", "grid.N"),
                      ("dt", "solver.dt"), ("T_end", "solver.T_end"), ("seed", "path.master_seed"),
                      ("paths", "ensemble.n_paths"), ("modes", "initial.modes")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides.append(f"{key}={json.dumps(val)}")
    if getattr(args, "allow_inadmissible", False):
        overrides.append("allow_inadmissible=true")
    if getattr(args, "loose", False):
        overrides.append("params.strict=false")
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"{args.config}: malformed JSON ({err})") from None
    return RunConfig.from_dict(doc, overrides)


def _out_dir(args, cfg: RunConfig | None, default: str) -> Path:
    out = Path(args.out or (cfg.doc["output"] if cfg and args.config else default))
    out.mkdir(parents=True, exist_ok=True)
    done = out / "DONE"
    if done.exists():
        done.unlink()
    return out


def _finish(out: Path, cfg: RunConfig | None, command: str, t0: float, extra: dict | None = None):
    if cfg is not None:
        write_json(out / "manifest.json", manifest(cfg, command, extra))
    else:
        write_json(out / "manifest.json", {"command": command, **(extra or {})})
    write_json(out / "timing.json", {"wall_time_s": time.perf_counter() - t0})
    (out / "DONE").write_text("ok\n")


def _path_for(cfg: RunConfig, args) -> BrownianPath:
    pth = cfg.doc["path"]
    if getattr(args, "path_csv", None):
        return read_path_csv(args.path_csv)
    sol = cfg.doc["solver"]
    T = max(pth["T"], sol["T_end"])
    h = min(pth["h"], sol["dt"] / 2 if sol["scheme"] == "etdrk4" else sol["dt"])
    if getattr(args, "zero_path", False):
        return BrownianPath.zero(T, h)
    return sample_path(pth["master_seed"], T, h)


def cmd_field_gen(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = _out_dir(args, cfg, "runs/field")
    u0 = cfg.initial_field()
    (out / "fields").mkdir(exist_ok=True)
    write_field(out / "fields" / "u0.gsqg", u0, cfg.params.s)
    write_field_csv(out / "fields" / "u0.csv", u0)
    cc = condition_check(u0, cfg.params)
    print(json.dumps(cc, indent=2))
    _finish(out, cfg, "field gen", t0, {"condition": cc})
    return EXIT_OK


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = _out_dir(args, cfg, f"runs/simulate_{args.kind}")
    p = cfg.params
    path = _path_for(cfg, args)
    u0 = cfg.initial_field()
    if args.kind == "transformed":
        rec = integrate_transformed(u0, path, cfg.solver(), p)
    else:
        rec = integrate_direct(u0, path, cfg.solver(scheme="direct_spde"), p)
    (out / "trajectories").mkdir(exist_ok=True)
    (out / "fields").mkdir(exist_ok=True)
    write_trajectory_jsonl(out / "trajectories" / f"{args.kind}.jsonl", rec)
    write_path_csv(out / "path.csv", path)
    write_field(out / "fields" / "u0.gsqg", u0, p.s)
    if rec.final_u is not None:
        write_field(out / "fields" / "final_u.gsqg", rec.final_u, p.s)
    if rec.final_theta is not None:
        write_field(out / "fields" / "final_theta.gsqg", rec.final_theta, p.s)
    summary = {"crossed": rec.crossed, "crossing_time": rec.crossing_time,
               "admissible": rec.admissible, "monotone": rec.monotone,
               "verdict": rec.verdict.as_json() if rec.verdict else None,
               "terminal_gevrey_norm": float(rec.gevrey_norm[-1]),
               "terminal_sobolev_norm": float(rec.sobolev_norm[-1]), "events": rec.events}
    write_json(out / "summary.json", summary)
    print(json.dumps(summary, indent=2))
    _finish(out, cfg, f"simulate {args.kind}", t0)
    return EXIT_FAIL if rec.monotone is False else EXIT_OK


def cmd_compare_transform(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = _out_dir(args, cfg, "runs/compare_transform")
    T = cfg.doc["solver"]["T_end"]
    h = min(args.dts)
    path = sample_path(cfg.doc["path"]["master_seed"], T, h)
    cmp = compare_transform(cfg.initial_field(), path, args.dts, T, cfg.params,
                            filter_tol=cfg.doc["solver"]["filter_tol"])
    rows = [{"dt": d, "l2_difference": e} for d, e in zip(cmp.dts, cmp.l2_differences)]
    write_rows_csv(out / "compare.csv", ["dt", "l2_difference"], rows)
    passed = cmp.order >= args.min_order
    print(json.dumps({"order": cmp.order, "pairwise_orders": cmp.orders, "pass": passed}))
    _finish(out, cfg, "compare-transform", t0, {"order": cmp.order})
    return EXIT_OK if passed else EXIT_FAIL


def cmd_picard(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = _out_dir(args, cfg, "runs/picard")
    path = sample_path(cfg.doc["path"]["master_seed"], args.T_loc, args.quad_dt)
    res = picard_local_solve(cfg.initial_field(), path, args.T_loc, args.n_iter, args.quad_dt,
                             cfg.params)
    rows = [{"iteration": i, "difference": d,
             "ratio": res.ratios[i - 1] if 0 < i <= len(res.ratios) else None}
            for i, d in enumerate(res.differences)]
    write_rows_csv(out / "picard.csv", ["iteration", "difference", "ratio"], rows)
    print(json.dumps({"verdict": res.verdict, "differences": res.differences, "ratios": res.ratios}))
    _finish(out, cfg, "picard", t0, {"verdict": res.verdict})
    return EXIT_OK if res.verdict == "converged" else EXIT_FAIL


def cmd_contraction(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = _out_dir(args, cfg, "runs/contraction")
    path = sample_path(cfg.doc["path"]["master_seed"], max(args.T_list), args.quad_dt)
    fit = contraction_scaling_experiment(cfg.initial_field(), path, args.T_list, cfg.params,
                                         n_iter=args.n_iter, quad_dt=args.quad_dt)
    write_rows_csv(out / "contraction.csv", ["T", "ratio"],
                   [{"T": t, "ratio": r} for t, r in zip(fit.T_list, fit.ratios)])
    target = 1 - cfg.params.sigma / 2
    passed = (not fit.degenerate) and abs(fit.exponent - target) <= args.tol
    print(json.dumps({"exponent": fit.exponent, "residual": fit.residual, "constant": fit.constant,
                      "degenerate": fit.degenerate, "target": target, "pass": passed}))
    _finish(out, cfg, "contraction-scaling", t0, {"exponent": fit.exponent})
    return EXIT_OK if passed else EXIT_FAIL


def cmd_mc(args) -> int:
    from .spectral import GevreyParams

    t0 = time.perf_counter()
    p = GevreyParams(nu=args.nu, alpha=args.alpha, beta=args.beta, strict=False)
    out = _out_dir(args, None, "runs/mc_crossing")
    est = mc_crossing_probability(args.paths, args.horizon, args.h, p, args.seed, args.monitor)
    write_crossings_csv(out / "crossings.csv", est.crossing_times)
    target = analytic_crossing_probability(p)
    gap = abs(est.estimate - target)
    passed = gap <= 3 * est.std_error + args.slack
    result = {"estimate": est.estimate, "std_error": est.std_error, "analytic": target,
              "analytic_finite_horizon": est.analytic_finite_horizon, "pass": passed}
    print(json.dumps(result, indent=2))
    _finish(out, None, "mc-crossing", t0,
            {"args": {k: getattr(args, k) for k in ("nu", "alpha", "beta", "paths", "horizon", "h",
                                                     "seed", "monitor", "slack")}, **result})
    return EXIT_OK if passed else EXIT_FAIL


def cmd_ensemble(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = Path(args.out or cfg.doc["output"])
    rep = run_ensemble(cfg, args.workers)
    write_run_dir(out, cfg, rep, "ensemble", time.perf_counter() - t0)
    print(json.dumps(rep.summary(), indent=2))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    results = run_suite(full=args.full)
    for r in results:
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['check']}  {json.dumps(r['details'])}")
    if args.out:
        out = _out_dir(args, None, "runs/verify")
        write_json(out / "verdicts.json", results)
        _finish(out, None, "verify", t0)
    return EXIT_OK if all(r["pass"] for r in results) else EXIT_FAIL


def cmd_report(args) -> int:
    run = Path(args.run_dir)
    if not run.is_dir():
        raise UsageError(f"run directory {run} does not exist")
    tables = run / "tables"
    tables.mkdir(exist_ok=True)
    written = []
    rows = []
    for f in sorted((run / "trajectories").glob("*.jsonl")) if (run / "trajectories").is_dir() else []:
        for r in read_trajectory_jsonl(f):
            rows.append({"run": f.stem, **r})
    if rows:
        write_rows_csv(tables / "trajectories.csv",
                       ["run", "t", "gevrey_norm", "sobolev_norm", "crossed"], rows)
        written.append("trajectories.csv")
    if (run / "report.csv").exists():
        rep = read_rows_csv(run / "report.csv")
        times = np.array([float(r["crossing_time"]) if r["crossing_time"] else np.inf for r in rep])
        horizon = float(json.loads((run / "manifest.json").read_text())["config"]["solver"]["T_end"])
        grid = np.linspace(0, horizon, 51)
        curve = [{"t": float(t), "surviving_fraction": float(np.mean(times > t))} for t in grid]
        write_rows_csv(tables / "survival.csv", ["t", "surviving_fraction"], curve)
        written.append("survival.csv")
    if not written:
        raise UsageError(f"{run} holds no trajectories/*.jsonl or report.csv to render")
    print("\n".join(str(tables / w) for w in written))
    return EXIT_OK


def _common(p: argparse.ArgumentParser, physics: bool = True):
    p.add_argument("--config", help="JSON run config (see sqgnoise.config for the schema)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config field; repeatable")
    p.add_argument("--out", help="run directory (default: config 'output' or runs/<command>)")
    if physics:
        p.add_argument("--nu", type=float)
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("-s", type=float, dest="s")
        p.add_argument("--sigma", type=float)
        p.add_argument("-N", type=int, dest="N")
        p.add_argument("--dt", type=float)
        p.add_argument("--T-end", type=float, dest="T_end")
        p.add_argument("--seed", type=int, help="master seed for the Wiener path(s)")
        p.add_argument("--modes", help="explicit initial data, e.g. '(1,0):1,(0,2):0.5'")
        p.add_argument("--allow-inadmissible", action="store_true",
                       help="skip the E <= nu^2/2 - beta gate (exploratory runs)")
        p.add_argument("--loose", action="store_true",
                       help="allow parameters outside the theorem's hypotheses")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sqgnoise", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    fld = sub.add_parser("field", help="initial-data utilities")
    fsub = fld.add_subparsers(dest="field_command", required=True)
    gen = fsub.add_parser("gen", help="build the configured initial field; write GSQG1 and CSV")
    _common(gen)
    gen.set_defaults(func=cmd_field_gen)

    sim = sub.add_parser("simulate", help="integrate one path")
    ssub = sim.add_subparsers(dest="kind", required=True)
    for kind in ("transformed", "direct"):
        sp = ssub.add_parser(kind, help=f"{kind} equation")
        _common(sp)
        sp.add_argument("--zero-path", action="store_true", help="use W = 0")
        sp.add_argument("--path-csv", help="read W from a (t, W) CSV instead of sampling")
        sp.set_defaults(func=cmd_simulate)

    ct = sub.add_parser("compare-transform", help="back-transformed vs direct SPDE gap under dt refinement")
    _common(ct)
    ct.add_argument("--dts", type=_floats, default=[1e-2, 1e-3, 1e-4])
    ct.add_argument("--min-order", type=float, default=0.5)
    ct.set_defaults(func=cmd_compare_transform)

    pc = sub.add_parser("picard", help="Picard iteration of the Duhamel map")
    _common(pc)
    pc.add_argument("--T-loc", type=float, default=0.1, dest="T_loc")
    pc.add_argument("--n-iter", type=int, default=8)
    pc.add_argument("--quad-dt", type=float, default=1e-3)
    pc.set_defaults(func=cmd_picard)

    cs = sub.add_parser("contraction-scaling", help="fit the Picard ratio exponent in T")
    _common(cs)
    cs.add_argument("--T-list", type=_floats, default=[0.05, 0.1, 0.2, 0.4], dest="T_list")
    cs.add_argument("--n-iter", type=int, default=3)
    cs.add_argument("--quad-dt", type=float, default=1e-3)
    cs.add_argument("--tol", type=float, default=0.05)
    cs.set_defaults(func=cmd_contraction)

    mc = sub.add_parser("mc-crossing", help="Monte Carlo drift-crossing probability")
    _common(mc, physics=False)
    mc.add_argument("--nu", type=float, default=1.0)
    mc.add_argument("--alpha", type=float, default=1.0)
    mc.add_argument("--beta", type=float, default=0.5)
    mc.add_argument("--paths", type=int, default=100_000)
    mc.add_argument("--horizon", type=float, default=50.0)
    mc.add_argument("--h", type=float, default=1e-2)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--monitor", choices=("bridge", "nodal"), default="bridge")
    mc.add_argument("--slack", type=float, default=0.005)
    mc.set_defaults(func=cmd_mc)

    en = sub.add_parser("ensemble", help="probability-bound ensemble experiment")
    _common(en)
    en.add_argument("--paths", type=int)
    en.add_argument("--workers", type=int, help="worker processes (default: $SQGNOISE_WORKERS or 1)")
    en.set_defaults(func=cmd_ensemble)

    vf = sub.add_parser("verify", help="run the fast invariant suite")
    vf.add_argument("--full", action="store_true", help="include the Monte Carlo check")
    vf.add_argument("--out")
    vf.set_defaults(func=cmd_verify, config=None, set=None)

    rp = sub.add_parser("report", help="render run outputs into plot-ready CSV tables")
    rp.add_argument("run_dir")
    rp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, FileNotFoundError) as err:
        print(f"sqgnoise {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as err:
        print(f"sqgnoise {args.command}: invalid input: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
