"""Command line interface.

    splitmap run   --scenario path [--seed N] [--out DIR] [--threads N] [--override k=v ...]
    splitmap sweep --scenario path --axis knob --values a,b,c [...]
    splitmap plot  --report path [path ...] [--out DIR]

SPLITMAP_OUT sets the default output directory.  Exit codes: 0 full
pipeline, 2 partial report, 1 error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import ConfigError, apply_overrides, load_config
from .runner import RunnerError, emit_plots, run_scenario, sweep


def _default_out() -> str:
    return os.environ.get("SPLITMAP_OUT", "splitmap-out")


def _load(args) -> object:
    cfg = load_config(args.scenario)
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"sampling.seed={args.seed}")
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="splitmap", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scenario")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None)
    run_p.add_argument("--threads", type=int, default=0)
    run_p.add_argument("--override", action="append", metavar="k=v")

    sw_p = sub.add_parser("sweep", help="run a scenario across knob values")
    sw_p.add_argument("--scenario", required=True)
    sw_p.add_argument("--axis", required=True)
    sw_p.add_argument("--values", required=True)
    sw_p.add_argument("--seed", type=int, default=None)
    sw_p.add_argument("--out", default=None)
    sw_p.add_argument("--threads", type=int, default=0)
    sw_p.add_argument("--override", action="append", metavar="k=v")

    pl_p = sub.add_parser("plot", help="emit SVG views of report files")
    pl_p.add_argument("--report", nargs="+", required=True)
    pl_p.add_argument("--out", default=None)

    args = ap.parse_args(argv)
    out_dir = args.out or _default_out()

    try:
        if args.command == "run":
            cfg = _load(args)
            if cfg.output.get("directory") and args.out is None:
                out_dir = cfg.output["directory"]
            art = run_scenario(cfg, out_dir)
            status = "failed" if art.failed else ("partial" if art.partial else "ok")
            print(f"run {status}: headline epsilon = {art.headline_epsilon}")
            print(f"artifacts in {art.out_dir}")
            return art.exit_code()
        if args.command == "sweep":
            cfg = _load(args)
            values = [float(v) for v in args.values.split(",") if v.strip()]
            arts = sweep(cfg, args.axis, values, out_dir, threads=args.threads)
            for v, art in zip(values, arts):
                status = "failed" if art.failed else ("partial" if art.partial else "ok")
                print(f"{args.axis}={v:g}: epsilon={art.headline_epsilon} [{status}]")
            print(f"sweep table: {Path(out_dir) / 'sweep.csv'}")
            return 1 if all(a.failed for a in arts) else 0
        if args.command == "plot":
            written = emit_plots(args.report, out_dir)
            for w in written:
                print(w)
            return 0
    except (ConfigError, RunnerError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    raise SystemExit(main())
