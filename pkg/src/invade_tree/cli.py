"""Command line entry point: ``invade-tree <subcommand> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .commands import COMMANDS, run_command
from .errors import ConfigError
from .cluster import render_svg
from .io import emit
from .streams import parse_seed
from .suite import EXIT_ERROR, EXIT_FAILED, EXIT_OK, run_experiment


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _formats(text: str) -> tuple:
    out = tuple(x.strip() for x in text.split(",") if x.strip())
    bad = [x for x in out if x not in ("csv", "json", "svg")]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"unknown output format(s) {', '.join(bad) or '(none)'}")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="invade-tree", description=__doc__)
    ap.add_argument("--version", action="version", version=f"invade-tree {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=parse_seed, default=0x5EED, help="master seed (decimal or 0x hex)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for the suite")
    common.add_argument("--out-dir", type=Path, default=Path("."), help="directory for CSV/JSON output")
    common.add_argument("--emit", type=_formats, default=("csv", "json"),
                        help="comma-separated outputs among csv, json, svg (svg: direct sample runs)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS.values():
        p = sub.add_parser(cmd.name, help=cmd.help, parents=[common])
        for o in cmd.options:
            p.add_argument(_flag(o.name), dest=o.name, default=None, choices=o.choices, help=o.help
                           + (f" (default {o.default})" if o.default not in (None, "", ()) else ""))
    s = sub.add_parser("suite", help="run an experiment config", parents=[common])
    s.add_argument("--config", default="paper-suite", help="config file, or 'paper-suite' for the bundled one")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        print("invade-tree: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    if args.command == "suite":
        return run_experiment(args.config, args.seed, args.out_dir, args.threads)
    given = {o.name: getattr(args, o.name) for o in COMMANDS[args.command].options
             if getattr(args, o.name) is not None}
    try:
        tab = run_command(args.command, given, args.seed, args.out_dir)
    except (ConfigError, ValueError) as exc:
        print(f"invade-tree: {exc}", file=sys.stderr)
        return EXIT_ERROR
    paths = emit(args.out_dir, tab.name, tab.fields, tab.rows, args.seed, args.emit)
    for name, fields, rows in tab.extra.get("tables", ()):
        paths += emit(args.out_dir, name, fields, rows, args.seed, args.emit)
    if "svg" in args.emit and tab.extra.get("trace") is not None:
        svg = Path(args.out_dir) / f"{tab.name}.svg"
        render_svg(tab.extra["trace"], svg)
        paths.append(svg)
    if tab.text:
        print(tab.text)
    for p in paths:
        print(f"wrote {p}")
    if tab.verdict is False:
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
