"""Command-line interface: ``jumplab {simulate,test,experiment,ingest,select}``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from jumplab.calibrate import BootstrapConfig, double_bootstrap_decision, lm_bootstrap_pvalue
from jumplab.errors import FlaggedFlat, JumpLabError, ParseError
from jumplab.frictionless import AjConfig, LmConfig, aj_test, cc_test, lm_test
from jumplab.harness import ExperimentConfig, run_experiment, write_result
from jumplab.ingest import bh_select, ingest_day_csv
from jumplab.model import LogPricePath, MarkLaw, ObservedPath, aggregate_last_tick
from jumplab.noise import LaConfig, PaConfig, ccn_test, la_test, pa_test
from jumplab.rng import derive_seed
from jumplab.simulate import HestonParams, JumpSpec, NoiseSpec, simulate_day, write_day_csv

METHODS = ("aj", "lm", "cc", "pa", "la", "ccn")


def _env_seed(default: int) -> int:
    value = os.environ.get("JUMPLAB_SEED")
    return int(value) if value else default


def load_path(path: str | Path, delta: float | None = None) -> LogPricePath:
    """Load a ``timestamp,price`` file or a simulated day dump (``observed`` column)."""
    head = pd.read_csv(path, nrows=0).columns
    if "observed" in head:
        df = pd.read_csv(path)
        values = df["observed"].to_numpy(dtype=float)
        step = delta if delta is not None else float(np.median(np.diff(df["time"].to_numpy(dtype=float))))
        return ObservedPath(values, step)
    p = ingest_day_csv(path)
    if delta is not None:
        return ObservedPath(p.values, delta)
    return ObservedPath(p.values, p.delta)


def run_tests(path: LogPricePath, methods: Sequence[str], args: argparse.Namespace) -> dict:
    """Run the requested methods on one path and return a JSON-ready report."""
    aj_cfg = AjConfig(p=args.p, k=args.k)
    lm_cfg = LmConfig(window=args.window)
    bs = BootstrapConfig(b1=args.b1, b2=args.b2, alpha=args.level, seed=_env_seed(args.seed))
    out: dict = {"n": path.n, "delta": path.delta, "level": args.level, "tests": {}}
    cache: dict = {}

    def lm_pair():
        if "lm" not in cache:
            rep = lm_test(path, lm_cfg)
            pb = lm_bootstrap_pvalue(path, lm_cfg, bs) if args.calibration == "bootstrap" else None
            cache["lm"] = (rep, pb)
        return cache["lm"]

    def la_pair():
        if "la" not in cache:
            la_cfg = LaConfig.default(path.delta, lam=args.lam)
            rep = la_test(path, la_cfg)
            db = double_bootstrap_decision(path, la_cfg, bs) if args.calibration == "bootstrap" else None
            cache["la"] = (rep, db)
        return cache["la"]

    def pa_report():
        if "pa" not in cache:
            cache["pa"] = pa_test(path, PaConfig(args.pa_k, args.pa_r))
        return cache["pa"]

    for m in methods:
        extra: dict = {}
        if m == "aj":
            rep = aj_test(path, aj_cfg)
        elif m == "lm":
            rep, pb = lm_pair()
            if pb is not None:
                extra["bootstrap_pvalue"] = pb
        elif m == "cc":
            lm_rep, pb = lm_pair()
            rep = cc_test(aj_test(path, aj_cfg), lm_rep, lm_pvalue=pb)
        elif m == "pa":
            rep = pa_report()
        elif m == "la":
            rep, db = la_pair()
            if db is not None:
                extra.update(bootstrap_pvalue=db.p_star, threshold=db.threshold,
                             adjusted_pvalue=db.adjusted_pvalue, reject_double_bootstrap=db.reject)
        else:
            la_rep, db = la_pair()
            rep = ccn_test(pa_report(), la_rep, la_pvalue=None if db is None else db.adjusted_pvalue)
        d = rep.to_dict()
        d.update(extra)
        pv = d.get("bootstrap_pvalue", d["pvalue"]) if m == "lm" else d["pvalue"]
        d["reject"] = bool(d.get("reject_double_bootstrap", pv <= args.level))
        out["tests"][m] = d
    return out


def _add_test_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", action="append", choices=METHODS, help="repeatable; default cc")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--p", type=float, default=4.0)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--window", type=int, default=None, help="LM window K (default ceil(n^0.6))")
    p.add_argument("--calibration", choices=("asymptotic", "bootstrap"), default="asymptotic")
    p.add_argument("--b1", type=int, default=199)
    p.add_argument("--b2", type=int, default=99)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pa-k", type=int, default=100)
    p.add_argument("--pa-r", type=int, default=1000)
    p.add_argument("--lam", type=float, default=0.125)


def cmd_test(args: argparse.Namespace) -> int:
    path = load_path(args.input, args.delta)
    if args.grid > 1:
        path = aggregate_last_tick(path, args.grid)
    report = run_tests(path, args.method or ["cc"], args)
    report["input"] = str(args.input)
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = _env_seed(args.seed)
    if args.jumps == "dense":
        jumps = JumpSpec.dense(args.intensity, MarkLaw.normal(args.mark_variance))
    elif args.jumps == "sparse":
        jumps = JumpSpec.sparse(args.intensity, MarkLaw.normal(args.mark_variance))
    else:
        jumps = JumpSpec.none()
    noise = NoiseSpec(args.noise, args.q if args.noise != "none" else 0.0)
    n = args.horizon_days * args.steps
    for d in range(args.count):
        day = simulate_day(HestonParams(), n, 1.0 / args.steps, derive_seed(base, d), jumps, noise)
        write_day_csv(day, out / f"day_{d:04d}.csv")
    print(f"wrote {args.count} day(s) to {out}")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    env_seed = os.environ.get("JUMPLAB_SEED")
    if env_seed:
        raw["base_seed"] = int(env_seed)
    overrides = {"replications": args.replications, "workers": args.workers, "base_seed": args.seed}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if args.grids:
        raw["grids"] = args.grids
    if args.levels:
        raw["levels"] = args.levels
    cfg = ExperimentConfig.from_dict(raw)
    result = run_experiment(cfg)
    sidecar = write_result(result, args.out)
    print(result.table.to_string(index=False))
    print(f"failed replications: {result.failed}; wrote {args.out} and {sidecar}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for item in args.inputs:
        p = Path(item)
        files.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    flagged = 0
    for f in files:
        try:
            path = ingest_day_csv(f, (args.session_start, args.session_end))
            if args.grid > 1:
                path = aggregate_last_tick(path, args.grid)
            report = run_tests(path, args.method or ["cc"], args)
        except FlaggedFlat:
            flagged += 1
            print(f"{f}: flat session, skipped", file=sys.stderr)
            continue
        except (ParseError, JumpLabError) as exc:
            flagged += 1
            print(f"{f}: {exc}", file=sys.stderr)
            continue
        report["input"] = str(f)
        (out / f"{f.stem}.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    print(f"processed {len(files) - flagged} of {len(files)} file(s); reports in {out}")
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    reports = sorted(Path(args.report_dir).glob("*.json"))
    names, pvals = [], []
    for r in reports:
        data = json.loads(r.read_text(encoding="utf-8"))
        test = data["tests"][args.method]
        names.append(r.stem)
        pvals.append(float(test.get("bootstrap_pvalue", test["pvalue"])) if args.method == "lm" else float(test["pvalue"]))
    if not pvals:
        print("no reports found", file=sys.stderr)
        return 1
    chosen = bh_select(pvals, args.q)
    json.dump({"q": args.q, "method": args.method, "selected": [names[i] for i in sorted(chosen)],
               "pvalues": dict(zip(names, pvals))}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumplab", description="Jump tests for high-frequency price paths.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate Heston days and dump them as CSV")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=23_400, help="observations per day")
    p.add_argument("--horizon-days", type=int, default=1)
    p.add_argument("--jumps", choices=("none", "dense", "sparse"), default="none")
    p.add_argument("--intensity", type=float, default=1.0)
    p.add_argument("--mark-variance", type=float, default=0.05)
    p.add_argument("--noise", choices=("none", "gaussian", "student_t8"), default="none")
    p.add_argument("--q", type=float, default=0.005)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("test", help="run jump tests on one path; prints JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--delta", type=float, default=None, help="override the sampling interval (day units)")
    p.add_argument("--grid", type=int, default=1, help="keep every GRID-th observation")
    _add_test_options(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--grids", type=int, nargs="+", default=None)
    p.add_argument("--levels", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("ingest", help="ingest timestamp,price files and write one JSON report per day")
    p.add_argument("inputs", nargs="+", help="CSV files or directories")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--session-start", default="09:30:00")
    p.add_argument("--session-end", default="16:00:00")
    p.add_argument("--grid", type=int, default=1)
    _add_test_options(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("select", help="Benjamini-Hochberg selection over a report directory")
    p.add_argument("report_dir")
    p.add_argument("--q", type=float, default=0.2)
    p.add_argument("--method", choices=METHODS, default="cc")
    p.set_defaults(func=cmd_select)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except JumpLabError as exc:
        print(f"jumplab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
