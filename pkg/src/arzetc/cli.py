"""Command-line interface: run, sweep, verify-kernels, table."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from . import runner
from .errors import ArzEtcError

OUTPUT_ENV = "ARZETC_OUT"


def _resolve_config(spec: str) -> runner.SimConfig:
    if spec in runner.PRESETS:
        return runner.PRESETS[spec]()
    return runner.load_config(spec)


def _with_output(config: runner.SimConfig, out: str | None) -> runner.SimConfig:
    directory = out or config.directory or os.environ.get(OUTPUT_ENV, "")
    return replace(config, directory=directory)


def _cmd_run(args) -> int:
    config = _with_output(_resolve_config(args.config), args.out)
    if args.kind:
        config = replace(config, kind=args.kind, label="")
    if args.c is not None:
        config = replace(config, c=args.c, label="")
    result = runner.run(config)
    stats = result.stats
    print(f"kind={result.kind} c={result.c:g} N_t={stats.n_t} "
          f"mean_dwell={stats.mean_dwell:.4g} min "
          f"norm_ratio={result.normT / max(result.norm0, 1e-300):.3e} "
          f"wall={result.wall_time:.1f}s")
    if result.metrics:
        m = result.metrics
        print(f"J_TTT={m.j_ttt:.4e} J_fuel={m.j_fuel:.4e} J_D={m.j_d:.4e}")
    if config.directory:
        print(f"outputs under {config.directory}")
    return 0


def _cmd_sweep(args) -> int:
    config = _with_output(_resolve_config(args.config), args.out)
    c_values = [float(tok) for tok in args.c.split(",")] if args.c else [0.0]
    kinds = args.kinds.split(",") if args.kinds else ["p_cetc"]
    result = runner.sweep(config, c_values, kinds)
    print(runner.render_table(result.rows))
    failures = [row for row in result.rows if row.get("error")]
    return 1 if failures else 0


def _cmd_verify_kernels(args) -> int:
    config = _resolve_config(args.config)
    report = runner.verify_kernels(config)
    for name, entry in report.items():
        if not isinstance(entry, dict):
            continue
        status = "" if "passed" not in entry else ("PASS" if entry["passed"] else "FAIL")
        detail = {k: v for k, v in entry.items() if k != "passed"}
        print(f"{name:18s} {status:4s} {detail}")
    print("all passed" if report["all_passed"] else "FAILURES present")
    return 0 if report["all_passed"] else 2


def _cmd_table(args) -> int:
    path = os.path.join(args.results_dir, "sweep_summary.csv")
    if not os.path.exists(path):
        print(f"no sweep_summary.csv under {args.results_dir}", file=sys.stderr)
        return 2
    with open(path) as fh:
        rows = []
        for row in csv.DictReader(fh):
            for key, val in row.items():
                try:
                    row[key] = float(val)
                except (TypeError, ValueError):
                    pass
            rows.append(row)
    print(runner.render_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arzetc",
        description="Event-triggered VSL control of the linearized ARZ model")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario (preset name or config file)")
    p_run.add_argument("config", help="preset (paper60min, ci-coarse) or config path")
    p_run.add_argument("--kind", choices=runner.RUN_KINDS, help="override trigger kind")
    p_run.add_argument("--c", type=float, help="override resource-aware parameter")
    p_run.add_argument("--out", help="output directory (default $ARZETC_OUT)")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="one run per (kind, c)")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--c", default="0,0.01,0.1,1,10,100",
                         help="comma-separated c values")
    p_sweep.add_argument("--kinds", default="p_cetc", help="comma-separated kinds")
    p_sweep.add_argument("--out", help="output directory (default $ARZETC_OUT)")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_ver = sub.add_parser("verify-kernels", help="kernel certification battery")
    p_ver.add_argument("config")
    p_ver.set_defaults(func=_cmd_verify_kernels)

    p_tab = sub.add_parser("table", help="render a sweep summary as aligned text")
    p_tab.add_argument("results_dir")
    p_tab.set_defaults(func=_cmd_table)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArzEtcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
