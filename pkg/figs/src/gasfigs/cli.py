"""Command line entry point: figs --spec <file> | --auto <run-dir> [--out dir]"""
from __future__ import annotations

import argparse
import sys

from .render import render
from .spec import auto_specs, spec_from_json


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="figs", description="regenerate figures from run CSVs")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", help="JSON figure specification")
    group.add_argument("--auto", metavar="RUN_DIR", help="default figure set for one run directory")
    parser.add_argument("--out", default=None, help="output directory (overrides the spec)")
    args = parser.parse_args(argv)

    try:
        specs = [spec_from_json(args.spec)] if args.spec else auto_specs(args.auto)
        written = []
        for spec in specs:
            written.extend(render(spec, out_dir=args.out))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
