"""Command-line entry point: ``gradvi <command> --config FILE [--out DIR]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .config import ConfigError, parse_config
from .runner import distance_only, regularity_study, run

COMMANDS = ("solve", "equivalence", "vector", "regularity", "distance")


def _h_list(text: str) -> list[float]:
    try:
        return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad --h-list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gradvi", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "solve one problem as configured",
        "equivalence": "solve with both scalar formulations and compare",
        "vector": "vector problem via the scalar reduction (and a direct solve for balls)",
        "regularity": "second-difference refinement table over --h-list",
        "distance": "write the boundary distance map only",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("runs"))
        sp.add_argument("--quiet", action="store_true")
        if name == "regularity":
            sp.add_argument("--h-list", type=_h_list, required=True,
                            help="comma-separated spacings, e.g. 1/64,1/128")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = parse_config(args.config.read_text(encoding="utf-8"))
    except (OSError, ConfigError) as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "equivalence":
            if spec.formulation == "vector":
                raise ConfigError("equivalence needs a scalar eta", "eta")
            spec = dataclasses.replace(spec, formulation="both", _cache={})
        elif args.command == "vector" and spec.formulation != "vector":
            raise ConfigError("vector command needs a list eta", "eta")
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 2

    if args.command == "regularity":
        res = regularity_study(spec, args.h_list, args.out)
    elif args.command == "distance":
        res = distance_only(spec, args.out)
    else:
        res = run(spec, args.out)
    if not args.quiet:
        if "contracts" in res.report:
            for name, ok in sorted(res.report["contracts"].items()):
                print(f"{'PASS' if ok else 'FAIL'} {name}")
        if "table" in res.report:
            for row in res.report["table"]:
                print(json.dumps({k: row[k] for k in ("h", "max_ratio_interior", "relative_change")
                                  if k in row}))
        print(f"artifacts: {res.directory}")
    return 0 if res.ok else 1


if __name__ == "__main__":
    sys.exit(main())
