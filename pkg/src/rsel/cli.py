"""Command-line front end.

Subcommands: ``run`` (one seeded selection), ``eval`` (Monte Carlo
guarantee verification), ``constants`` (procedure constants).  Exit codes:
0 decision, 1 usage/config error, 2 no-decision (budget cap hit).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import numerics
from .config import ConfigError, load_config
from .core import BUDGET_CAP
from .harness import (CSV_COLUMNS, ExperimentConfig, build_instance,
                      evaluate, run_once)

__all__ = ["main"]


def _experiment_from_config(cfg: dict, seed_override: int | None,
                            jobs: int) -> ExperimentConfig:
    params = {k: v for k, v in cfg["procedure"].items() if k != "name"}
    harness = cfg["harness"]
    seed = seed_override if seed_override is not None else harness.get("seed", 0)
    pool = cfg["pool"]
    return ExperimentConfig(
        procedure=cfg["procedure"]["name"],
        params=params,
        instance=build_instance(cfg["instance"]),
        replications=harness.get("replications", 1),
        seed=seed,
        pgs_delta=harness.get("pgs_delta"),
        pool_backend=pool.get("backend", "simulated"),
        pool_delay=pool.get("delay", "constant:1"),
        jobs=jobs,
    )


def _write_trace(rows, out_path: str | None) -> None:
    handle = open(out_path, "w", newline="") if out_path else sys.stdout
    try:
        writer = csv.writer(handle)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
    finally:
        if out_path:
            handle.close()


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    exp = _experiment_from_config(cfg, args.seed, jobs=1)
    trace: list | None = [] if args.trace else None
    result = run_once(exp, rep=0, trace=trace)
    print(f"procedure: {exp.procedure}")
    print(f"selected: {result.selected} (0-based index)")
    print(f"per_alt_samples: {','.join(str(c) for c in result.per_alt_samples)}")
    print(f"total_samples: {result.total_samples}")
    print(f"terminated_by: {result.terminated_by}")
    if args.trace:
        rows = [("elimination", stage, alt) for stage, alt in result.elimination_log]
        rows += [tuple(r) for r in (trace or [])]
        _write_trace(rows, args.out)
    return 2 if result.terminated_by == BUDGET_CAP else 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if not cfg["harness"]:
        raise ConfigError("harness", "eval requires a [harness] section")
    if "replications" not in cfg["harness"]:
        raise ConfigError("harness.replications", "missing required key")
    exp = _experiment_from_config(cfg, args.seed, jobs=args.jobs)
    report = evaluate(exp)

    if args.format == "json":
        payload = json.dumps(report.to_json_dict(), indent=2, sort_keys=True)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(payload + "\n")
        else:
            print(payload)
    else:
        rows = [CSV_COLUMNS, report.csv_row()]
        if args.out:
            with open(args.out, "w", newline="") as fh:
                csv.writer(fh).writerows(rows)
        else:
            csv.writer(sys.stdout).writerows(rows)

    alpha = exp.params.get("alpha")
    if exp.replications < 2:
        print(f"verdict: INCONCLUSIVE (R={exp.replications} gives degenerate "
              f"standard errors)")
    elif alpha is not None:
        threshold = 1.0 - float(alpha) - 2.0 * report.pcs_se
        verdict = "PASS" if report.pcs_hat >= threshold else "FAIL"
        print(f"verdict: {verdict} (pcs_hat={report.pcs_hat:.4f} vs "
              f"1-alpha-2se={threshold:.4f})")
    else:
        print(f"verdict: NO-GUARANTEE (fixed-budget procedure; "
              f"pcs_hat={report.pcs_hat:.4f})")
    return 0


def cmd_constants(args) -> int:
    name = args.name
    if name == "bechhofer_h":
        if args.k is None or args.alpha is None:
            raise ConfigError("constants", "bechhofer_h needs --k and --alpha")
        h = numerics.bechhofer_h(args.k, args.alpha)
        resid = numerics._bechhofer_prob(h, args.k) - (1.0 - args.alpha)
        print(f"bechhofer_h(k={args.k}, alpha={args.alpha}) = {h:.10f}")
        print(f"residual of defining equation: {resid:.3e}")
    elif name == "rinott_h":
        if args.k is None or args.n0 is None or args.alpha is None:
            raise ConfigError("constants", "rinott_h needs --k, --n0 and --alpha")
        h = numerics.rinott_h(args.k, args.n0, args.alpha)
        dist = numerics.DistParams(dof=args.n0 - 1)
        resid = numerics._rinott_prob(h, dist, args.k) - (1.0 - args.alpha)
        print(f"rinott_h(k={args.k}, n0={args.n0}, alpha={args.alpha}) = {h:.10f}")
        print(f"residual of defining equation: {resid:.3e}")
    elif name == "kn_eta":
        if args.k is None or args.n0 is None or args.alpha is None:
            raise ConfigError("constants", "kn_eta needs --k, --n0 and --alpha")
        eta = numerics.kn_eta(args.k, args.n0, args.alpha)
        h2 = numerics.kn_h2(args.k, args.n0, args.alpha)
        print(f"kn_eta(k={args.k}, n0={args.n0}, alpha={args.alpha}) = {eta:.10f}")
        print(f"h^2 = 2*eta*(n0-1) = {h2:.10f}")
        print("precision: closed form at double precision")
    else:
        raise ConfigError("constants", f"unknown constant {name!r}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsel",
        description="Ranking-and-selection procedures and their Monte Carlo "
                    "guarantee harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one seeded selection")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="overrides harness.seed")
    p_run.add_argument("--trace", action="store_true",
                       help="emit elimination/allocation trace CSV")
    p_run.add_argument("--out", default=None, help="trace destination")
    p_run.set_defaults(func=cmd_run)

    p_eval = sub.add_parser("eval", help="verify guarantees by Monte Carlo")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--out", default=None, help="report destination")
    p_eval.add_argument("--format", choices=("csv", "json"), default="csv")
    p_eval.add_argument("--jobs", type=int, default=1,
                        help="max concurrent replications")
    p_eval.set_defaults(func=cmd_eval)

    p_const = sub.add_parser("constants", help="print a procedure constant")
    p_const.add_argument("name", choices=("bechhofer_h", "rinott_h", "kn_eta"))
    p_const.add_argument("--k", type=int, default=None)
    p_const.add_argument("--n0", type=int, default=None)
    p_const.add_argument("--alpha", type=float, default=None)
    p_const.set_defaults(func=cmd_constants)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
