"""Command line entry point: ``hffl run|summarize|shapley|bounds``.

Exit status is 0 on success, 2 for configuration errors and 3 for failures
during a run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import bounds, harness
from .errors import CapacityError, ConfigError, DomainError, FormatError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
_CONFIG_ERRORS = (ConfigError, FormatError, CapacityError, DomainError)


def _run(args, kind=None):
    cfg = harness.load_config(args.config)
    if kind is not None and cfg.kind != kind:
        cfg = harness.ExperimentConfig.from_dict({**cfg.raw, "kind": kind})
    record = harness.run_experiment(cfg, run_dir=args.run_dir, overwrite=args.force)
    print(f"wrote {record.run_dir}")
    sys.stdout.write((Path(record.run_dir) / "summary.csv").read_text())


def _summarize(args):
    records = [harness.load_record(d) for d in args.run_dirs]
    table = harness.summarize(records)
    sys.stdout.write(harness.summary_csv(table, harness.KEY_NAMES[records[0].kind]))


def _bounds(args):
    rows = bounds.bound_table(args.m, args.eps, args.family_size, tuple(args.range))
    if args.csv:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["m", "epsilon", "family_size", "delta"])
        for r in rows:
            w.writerow([r["m"], repr(r["epsilon"]), r["family_size"], repr(r["delta"])])
        return
    print(f"{'m':>8}  {'epsilon':>10}  {'|F|':>6}  {'delta':>12}")
    for r in rows:
        print(f"{r['m']:>8}  {r['epsilon']:>10.4g}  {r['family_size']:>6}  {r['delta']:>12.6g}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hffl", description="Hierarchically fair federated learning experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "run the experiment described by a TOML config"),
                        ("shapley", "run a Shapley valuation experiment from a TOML config")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        p.add_argument("--run-dir", default=None, help="write here instead of <output root>/<name>")
        p.add_argument("--force", action="store_true", help="reuse an existing run directory")

    p = sub.add_parser("summarize", help="median/std table across run directories")
    p.add_argument("run_dirs", nargs="+")

    p = sub.add_parser("bounds", help="tabulate the Hoeffding/union failure probability")
    p.add_argument("--m", type=int, nargs="+", required=True)
    p.add_argument("--eps", type=float, nargs="+", required=True)
    p.add_argument("--family-size", type=int, default=1)
    p.add_argument("--range", type=float, nargs=2, default=(0.0, 1.0), metavar=("A", "B"))
    p.add_argument("--csv", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {
        "run": _run,
        "shapley": lambda a: _run(a, kind="shapley"),
        "summarize": _summarize,
        "bounds": _bounds,
    }
    try:
        handlers[args.command](args)
    except _CONFIG_ERRORS as exc:
        print(f"hffl: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 3
        print(f"hffl: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
