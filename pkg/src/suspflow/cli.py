"""Command line entry point: ``suspflow run <config>`` and ``suspflow validate <config>``.

Exit codes: 0 success, 2 invalid config, 3 every result row truncated.
"""
from __future__ import annotations

import argparse
import sys

from . import config as config_mod
from .runner import execute

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_TRUNCATED = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="suspflow", description="Run time-changed suspension flow experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, default=None)
    v = sub.add_parser("validate", help="check a config file and list problems")
    v.add_argument("config")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        diags = config_mod.validate(args.config)
        for d in diags:
            print(d)
        return EXIT_INVALID if any(d.level == "error" for d in diags) else EXIT_OK

    try:
        cfg = config_mod.load(args.config)
    except config_mod.ConfigError as e:
        for d in e.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_INVALID
    if args.workers is not None and args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_INVALID
    for d in config_mod.validate(args.config):
        print(d, file=sys.stderr)
    manifest = execute(cfg, out_dir=args.out, workers=args.workers, seed=args.seed)
    print(f"{manifest['run_id']}: {manifest['rows']} rows")
    if manifest["rows"] and manifest["truncated_rows"] == manifest["rows"]:
        return EXIT_TRUNCATED
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
