"""Command-line entry point: ``trafficlab <experiment-id> --config FILE ...``.

Exit codes: 0 success, 1 usage error, 2 declared-tolerance failure.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import harness

EXIT_OK, EXIT_USAGE, EXIT_TOLERANCE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ids = list(harness.EXPERIMENTS)
    p = _Parser(prog="trafficlab", description="Run a seeded traffic-model experiment.",
                epilog="experiments: " + ", ".join(ids) + "; use 'list' to print the catalog")
    p.add_argument("experiment", help="experiment id, or 'list'")
    p.add_argument("--config", help="flat key = value file or JSON object")
    p.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    p.add_argument("--replicas", type=int, help="replica count (overrides the config file)")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for replicas")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.experiment == "list":
        print(json.dumps(harness.list_experiments(), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        raw = harness.load_config(args.config) if args.config else {}
        cfg = harness.validate(args.experiment, raw, seed=args.seed, replicas=args.replicas)
    except harness.ConfigError as exc:
        print(f"trafficlab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs < 1:
        print("trafficlab: usage error: jobs: must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    report = harness.run(cfg, jobs=args.jobs)
    text = report.to_csv() if args.format == "csv" else report.to_json()
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"trafficlab: usage error: out: cannot write {args.out!r} ({exc.strerror})", file=sys.stderr)
            return EXIT_USAGE
    else:
        sys.stdout.write(text)
    return EXIT_TOLERANCE if report.passed is False else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
