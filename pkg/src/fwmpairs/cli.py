"""Command-line entry point.

Usage: fwmpairs <scenario> [--config PATH] [--seed N] [--pulses N]
[--out DIR], plus a ``validate`` subcommand that checks a config without
running anything. Exit codes: 0 success, 2 invalid config (itemized
messages on stderr), 3 physics or scenario validity error.
"""

from __future__ import annotations

import argparse
import sys

from .calibration import FitError
from .config import ConfigError, config_hash, load_config, replace_run
from .fwm import PhysicsValidityError
from .modes import ModeSolverError
from .scenarios import SCENARIOS, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PHYSICS = 3


def _default_config() -> str:
    from importlib import resources
    return str(resources.files("fwmpairs.data") / "default.ini")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fwmpairs",
        description="Photon-pair FWM simulator for a tapered As2Se3 "
                    "microwire")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func in sorted(SCENARIOS.items()):
        p = sub.add_parser(name, help=func.__doc__.splitlines()[0].lower())
        p.add_argument("--config", default=None,
                       help="INI config (default: packaged default.ini)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the [run] seed")
        p.add_argument("--pulses", type=int, default=None,
                       help="override the [run] n_pulses")
        p.add_argument("--out", default="fwmpairs_out",
                       help="output directory (default: fwmpairs_out)")

    v = sub.add_parser("validate", help="check a config file and exit")
    v.add_argument("--config", default=None,
                   help="INI config (default: packaged default.ini)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config_path = args.config or _default_config()
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for line in exc.errors:
            print(f"  - {line}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print(f"config ok (hash {config_hash(cfg)})")
        return EXIT_OK

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.pulses is not None:
        overrides["n_pulses"] = args.pulses
    if overrides:
        try:
            cfg = replace_run(cfg, **overrides)
        except ConfigError as exc:
            print("config error:", file=sys.stderr)
            for line in exc.errors:
                print(f"  - {line}", file=sys.stderr)
            return EXIT_CONFIG

    try:
        written = run_scenario(args.command, cfg, args.out)
    except (PhysicsValidityError, ModeSolverError, FitError,
            ValueError) as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
