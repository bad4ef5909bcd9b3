"""Command-line entry point: ``timeslice <subcommand> [--config FILE] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .exceptions import GuardError
from .experiments import RUNNERS, ExperimentConfig, jsonable, write_report

log = logging.getLogger("timeslice")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timeslice", description="Time-slicing propagator experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, runner in RUNNERS.items():
        doc = (runner.__doc__ or "").strip().splitlines()[0]
        p = sub.add_parser(name, help=doc, description=doc)
        p.add_argument("--config", help="JSON file with ExperimentConfig fields")
        p.add_argument("--out", default=f"out/{name}", help="output directory (default: out/<subcommand>)")
        p.add_argument("--threads", type=int, default=None, help="worker threads for independent sweep points")
        p.add_argument("--seed", type=int, default=None, help="seed for sampled diagnostics")
    return parser


def load_config(path: str | None, threads: int | None, seed: int | None) -> ExperimentConfig:
    data = {}
    if path:
        with open(path) as fh:
            data = json.load(fh)
    if threads is not None:
        data["threads"] = threads
    if seed is not None:
        data["seed"] = seed
    return ExperimentConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    """Run one subcommand; exit status 0 iff every PASS criterion holds.

    Guard failures abort with status 2 after writing the guard name and
    details into ``summary.json``; configuration errors exit with status 3.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.threads, args.seed)
    except (ValueError, TypeError, OSError) as err:
        log.error("bad configuration: %s", err)
        return 3
    os.makedirs(args.out, exist_ok=True)
    try:
        report = RUNNERS[args.command](cfg)
    except GuardError as err:
        summary = {"kind": args.command, "passed": False, "aborted": err.guard,
                   "message": str(err), "details": err.details, "config": cfg.as_dict()}
        with open(os.path.join(args.out, "summary.json"), "w") as fh:
            json.dump(jsonable(summary), fh, indent=2, sort_keys=True)
        log.error("guard %s: %s", err.guard, err)
        return 2
    path = write_report(report, args.out)
    log.info("%s: %s (%s)", args.command, "PASS" if report.passed else "FAIL", path)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
