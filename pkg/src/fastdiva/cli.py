"""Command line entry point.

::

    fastdiva run --config spec.json --out results/ [--trials n] [--seed s] [--threads n]
    fastdiva verify [--only 1,2,5] [--threads n]

``verify`` exits with status 0 only if every selected acceptance check passes.
The worker count defaults to ``$FASTDIVA_THREADS`` (or 1).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import acceptance
from .harness import THREADS_ENV, load_spec, run_experiment


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastdiva", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte-Carlo experiment from a JSON config")
    r.add_argument("--config", required=True, help="experiment JSON (schema_version 1)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--trials", type=int, help="override the number of trials")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--threads", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", help="comma-separated check numbers, e.g. 1,2,5")
    v.add_argument("--threads", type=int, help=f"worker processes (default ${THREADS_ENV} or 1)")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        try:
            spec = load_spec(args.config)
            changes = {k: getattr(args, k) for k in ("trials", "seed") if getattr(args, k) is not None}
            if changes:
                spec = spec.replace(**changes)
            summary = run_experiment(spec, args.out, threads=args.threads)
        except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for label, p in summary["algorithms"].items():
            vals = ", ".join("n/a" if v is None else f"{v:.2f}" for v in p["trimmed_mean"])
            print(f"{label}: trimmed-mean ISR [dB] = {vals}")
        return 0

    only = None
    if args.only:
        only = {int(x) for x in args.only.split(",") if x.strip()}
    results = acceptance.run_all(threads=args.threads, only=only)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed"
          + (f"; failed: {failed}" if failed else ""))
    return 0 if not failed else 1


if __name__ == "__main__":
    sys.exit(main())
