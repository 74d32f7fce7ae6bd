"""Command-line entry point: config-driven experiment dispatch.

    hartreelab <subcommand> --config FILE [--out DIR] [--threads N] [--no-plot]
    hartreelab validate --config FILE

The subcommand must match the config's ``subcommand`` field; ``validate``
only parses and reports.  Exit codes: 0 success, 2 configuration error,
3 runtime failure, 10 completed with a detected event (blow-up).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import SUBCOMMANDS, ConfigError, parse
from .runner import EXIT_CONFIG, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hartreelab", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS + ("validate",):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML experiment config")
        if name != "validate":
            sp.add_argument("--out", default=None, help="output directory")
            sp.add_argument("--threads", type=int, default=None,
                            help="cap FFT worker threads (1 = deterministic mode)")
            sp.add_argument("--no-plot", action="store_true",
                            help="skip figure rendering")
        if name == "linearize":
            sp.add_argument("--groundstate", default=None,
                            help="field snapshot to linearize around")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse(Path(args.config).read_text())
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print("config ok")
        return 0
    if cfg.subcommand != args.command:
        print(f"config error: config declares subcommand "
              f"{cfg.subcommand!r} but {args.command!r} was invoked",
              file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "groundstate", None):
        cfg.data["linearize"]["groundstate_path"] = args.groundstate
    return run(cfg, out_flag=args.out, threads=args.threads,
               make_plots=not args.no_plot)


if __name__ == "__main__":
    sys.exit(main())
