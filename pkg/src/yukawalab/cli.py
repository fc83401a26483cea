"""Command line entry point: ``run``, ``validate``, ``report``, ``hartree`` and ``sweep``.

Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from .harness.config import ConfigError, RunConfig
from .harness.report import render_report
from .harness.runner import NumericalFailure, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _run(cfg: RunConfig, render: bool) -> int:
    try:
        man = run_experiment(cfg)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc} (partial outputs in {cfg.output_dir})", file=sys.stderr)
        return EXIT_NUMERICAL
    if render:
        render_report(cfg.output_dir)
    print(json.dumps({"output_dir": str(cfg.output_dir), "status": man.status, "summary": man.summary}, default=str))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="yukawalab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("config")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE", help="dotted key override, repeatable")
    r.add_argument("--report", action="store_true", help="render figures after the run")

    v = sub.add_parser("validate", help="check a config and print the resolved form")
    v.add_argument("config")
    v.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")

    rep = sub.add_parser("report", help="render figures for a finished run directory")
    rep.add_argument("run_dir")

    h = sub.add_parser("hartree", help="constrained minimization at one or more masses")
    h.add_argument("--delta", type=_floats, default=[0.5], help="comma separated mass scales")
    h.add_argument("--method", choices=("scf", "pg"), default="scf")
    h.add_argument("--starts", type=int, default=3)
    h.add_argument("--out", default="runs/hartree")

    s = sub.add_parser("sweep", help="hbar sweep of the truncated quantum model")
    s.add_argument("--hslash-list", type=_floats, default=[0.5, 0.25, 0.125])
    s.add_argument("--du", type=int, default=3)
    s.add_argument("--meson-modes", type=int, default=3)
    s.add_argument("--cap", type=int, default=None)
    s.add_argument("--observable", choices=("weyl", "field", "corr", "ground"), default="weyl")
    s.add_argument("--horizon", type=float, default=2.0)
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--out", default="runs/sweep")
    for q in (h, s):
        q.add_argument("--report", action="store_true", help="render figures after the run")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(RunConfig.from_file(args.config, args.override), args.report)
        if args.command == "validate":
            cfg = RunConfig.from_file(args.config, args.override)
            print(json.dumps(cfg.data, indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "report":
            for path in render_report(args.run_dir):
                print(path)
            return EXIT_OK
        if args.command == "hartree":
            raw = {"kind": "hartree", "output_dir": args.out, "hartree": {"deltas": args.delta, "method": args.method, "starts": args.starts}}
            return _run(RunConfig.from_dict(raw), args.report)
        if args.command == "sweep":
            raw = {
                "kind": "quantum-sweep",
                "output_dir": args.out,
                "quantum_sweep": {
                    "hslash_list": args.hslash_list,
                    "du": args.du,
                    "meson_modes": args.meson_modes,
                    "cap": args.cap,
                    "observable": args.observable,
                    "horizon": args.horizon,
                    "delta": args.delta,
                },
            }
            return _run(RunConfig.from_dict(raw), args.report)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
