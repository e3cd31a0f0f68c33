"""Batch command-line front end.

Every command reads one YAML config, runs seeded and reproducible work, and
appends a single JSON-line result record (inputs echo, config hash, seed,
value, standard error, runtime, pass flag).  Identical configs hit the
result cache unless --no-cache is given.  Exit status is 0 iff all requested
checks passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import measures
from .config import (
    ResultCache,
    Stopwatch,
    config_hash,
    jsonable,
    load_config,
    make_record,
    parse_model,
    parse_schedule,
    parse_sets,
    parse_settings,
    parse_solver,
)
from .derivatives import (
    dpsi1_dp,
    dpsi1_dq,
    dpsi_dp,
    dpsi_dq,
    dpsi_dt,
    finite_difference,
)
from .estimator import eval_psi, eval_psi1, eval_psi_s
from .models import brute_force_oracle, ground_state_proxy
from .schedule import collapse_equivalent, derived_coefficients, validate
from .stationarize import path_scan, sfl_identity_check, solve_complete_frame, solve_modulo_m

COMMANDS = (
    "validate", "coeffs", "eval", "grad", "tderiv", "stationarize",
    "path-scan", "identity-check", "model",
)


def _estimate_fields(est):
    return est.value, est.std_error, est.n_outer


def _point_summary(point):
    return {
        "t": point.t,
        "m": jsonable(point.schedule.m),
        "p": jsonable(point.schedule.p),
        "q": jsonable(point.schedule.q),
        "converged": point.converged,
        "iterations": point.iterations,
        "max_residual": point.max_residual(),
        "residuals": {
            fam: [{"value": e.value, "std_error": e.std_error} for e in ests]
            for fam, ests in point.residuals.items()
        },
    }


def run_command(command: str, config: dict, args) -> tuple[dict, bool]:
    """Execute one command; returns (record, passed)."""
    seed = args.seed if args.seed is not None else config.get("seed")
    threads = args.threads
    extra: dict = {}
    value = std_error = n_outer = None
    passed = True

    with Stopwatch() as watch:
        if command == "validate":
            sched = parse_schedule(config)
            report = validate(sched)
            passed = report.ok
            extra = {"ok": report.ok, "violations": list(report.violations)}
        elif command == "coeffs":
            sched = parse_schedule(config)
            coeffs = derived_coefficients(sched)
            collapsed = collapse_equivalent(sched)
            extra = {
                "a": jsonable(coeffs.a), "b": jsonable(coeffs.b), "c": jsonable(coeffs.c),
                "collapsed_r": collapsed.r,
            }
        elif command == "eval":
            sets = parse_sets(config)
            sched = parse_schedule(config)
            settings = parse_settings(config, args.seed)
            target = args.target or config.get("target", "psi")
            fn = {"psi": eval_psi, "psi1": eval_psi1, "psi_s": eval_psi_s}[target]
            est = fn(sets, sched, settings, threads=threads)
            value, std_error, n_outer = _estimate_fields(est)
            extra = {"target": target}
        elif command in ("grad", "tderiv"):
            sets = parse_sets(config)
            sched = parse_schedule(config)
            settings = parse_settings(config, args.seed)
            blk = config.get("grad", {})
            variable = "t" if command == "tderiv" else (args.variable or blk.get("variable", "p"))
            target = args.target or blk.get("target", "psi")
            k1 = args.k if args.k is not None else blk.get("k")
            table = {
                ("psi", "p"): lambda: dpsi_dp(sets, sched, settings, int(k1), threads),
                ("psi", "q"): lambda: dpsi_dq(sets, sched, settings, int(k1), threads),
                ("psi", "t"): lambda: dpsi_dt(sets, sched, settings, threads),
                ("psi1", "p"): lambda: dpsi1_dp(sets, sched, settings, int(k1), threads),
                ("psi1", "q"): lambda: dpsi1_dq(sets, sched, settings, int(k1), threads),
            }
            if (target, variable) not in table:
                raise ValueError(f"no analytic formula for d{target}/d{variable}")
            est = table[(target, variable)]()
            value, std_error, n_outer = _estimate_fields(est)
            extra = {"target": target, "variable": variable, "k": k1}
            if args.check_fd or blk.get("check_fd", False):
                fd = finite_difference(target, variable, sets, sched, settings,
                                       step=blk.get("fd_step"),
                                       k1=None if variable == "t" else int(k1),
                                       threads=threads)
                combined = float(np.hypot(est.std_error, fd.std_error))
                gap = abs(est.value - fd.value)
                tol = max(3.0 * combined, 1e-3 * abs(est.value))
                passed = bool(gap <= tol)
                extra["fd"] = {"value": fd.value, "std_error": fd.std_error,
                               "gap": gap, "tolerance": tol, "note": fd.note}
        elif command == "stationarize":
            sets = parse_sets(config)
            sched = parse_schedule(config)
            settings = parse_settings(config, args.seed)
            opts = parse_solver(config)
            frame = args.frame or config.get("frame", "complete")
            solve = solve_complete_frame if frame == "complete" else solve_modulo_m
            point = solve(sets, settings, sched, opts)
            passed = point.converged
            value = point.max_residual()
            n_outer = settings.n_outer
            extra = {"frame": frame, "point": _point_summary(point)}
        elif command == "path-scan":
            sets = parse_sets(config)
            sched = parse_schedule(config)
            settings = parse_settings(config, args.seed)
            opts = parse_solver(config)
            grid = config.get("path", {}).get("grid", [0.0, 0.25, 0.5, 0.75, 1.0])
            scan = path_scan(sets, settings, grid, sched, opts,
                             frame=config.get("frame", "complete"))
            passed = all(p.converged for p in scan.points)
            value, std_error = scan.max_deviation.value, scan.max_deviation.std_error
            n_outer = settings.n_outer
            extra = {
                "grid": list(scan.ts),
                "psi1": [{"value": e.value, "std_error": e.std_error} for e in scan.psi1],
                "points": [_point_summary(p) for p in scan.points],
                "jump_flags": list(scan.jump_flags),
                "warm_start": list(scan.warm_start),
            }
            csv_path = _out_dir(config) / "path_scan.csv"
            with open(csv_path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["t", "psi1", "std_error", "max_residual", "converged"])
                for t, est, point in zip(scan.ts, scan.psi1, scan.points):
                    writer.writerow([t, est.value, est.std_error,
                                     point.max_residual(), point.converged])
            extra["csv"] = str(csv_path)
        elif command == "identity-check":
            sets = parse_sets(config)
            sched = parse_schedule(config)
            settings = parse_settings(config, args.seed)
            opts = parse_solver(config)
            report = sfl_identity_check(sets, settings, sched, opts)
            value, std_error = report.difference.value, report.difference.std_error
            n_outer = settings.n_outer
            extra = {
                "lhs": {"value": report.lhs.value, "std_error": report.lhs.std_error},
                "rhs": {"value": report.rhs.value, "std_error": report.rhs.std_error},
                "correction": report.correction,
                "point_t1": _point_summary(report.point_t1),
                "point_t0": _point_summary(report.point_t0),
            }
        elif command == "model":
            spec = parse_model(config)
            if args.oracle or config.get("oracle", False):
                n_mc = int(config.get("oracle_draws", 2000))
                est = brute_force_oracle(spec, n_mc, threads=threads)
                extra = {"family": spec.family, "mode": "oracle"}
            else:
                sched = parse_schedule(config)
                settings = parse_settings(config, args.seed)
                ladder = config.get("beta_ladder")
                est = ground_state_proxy(spec, sched, settings, beta_ladder=ladder,
                                         threads=threads)
                extra = {"family": spec.family, "mode": "ground-state", "note": est.note}
            value, std_error, n_outer = _estimate_fields(est)
        else:
            raise ValueError(f"unknown command {command!r}")

    record = make_record(command, config, seed if seed is not None else -1,
                         value, std_error, n_outer, watch.elapsed, passed,
                         extra=jsonable(extra))
    return record, passed


def _out_dir(config: dict) -> Path:
    out = Path(config.get("output", {}).get("dir", "outputs"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilift",
        description="Lifted-interpolation evaluations, derivatives, stationarization, and model oracles",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="YAML config path")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="JSON-lines output path")
    parser.add_argument("--no-cache", action="store_true")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--target", choices=["psi", "psi1", "psi_s"], default=None)
    parser.add_argument("--variable", choices=["p", "q", "t"], default=None)
    parser.add_argument("--k", type=int, default=None, help="level index for grad")
    parser.add_argument("--check-fd", action="store_true", dest="check_fd")
    parser.add_argument("--frame", choices=["complete", "modulo-m"], default=None)
    parser.add_argument("--ground-state", action="store_true", dest="ground_state")
    parser.add_argument("--oracle", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = dict(config)
            config["seed"] = args.seed
        if "seed" not in config:
            raise ValueError("a seed is mandatory (config key 'seed' or --seed)")
        digest = config_hash(config)
        out_dir = _out_dir(config)
        cache = ResultCache(Path(config.get("cache", {}).get("dir", out_dir / "cache")))

        record = None
        cache_key = f"{args.command}:{digest}"
        cache_digest = config_hash({"command": args.command, "hash": digest})
        if not args.no_cache:
            record = cache.lookup(cache_digest)
            if record is not None and args.verbose:
                print(f"cache hit for {cache_key}", file=sys.stderr)
        passed = None
        if record is None:
            record, passed = run_command(args.command, config, args)
            cache.store(cache_digest, record)
        else:
            passed = bool(record.get("passed", True))

        out_path = Path(args.out) if args.out else out_dir / "results.jsonl"
        out_path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record, sort_keys=True)
        with open(out_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        print(line)
        return 0 if passed else 1
    except (ValueError, KeyError, OSError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
