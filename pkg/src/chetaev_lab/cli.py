"""Command line front end.

    chetaev-lab run <config-path | scenario-id> [--out DIR] [--seed N] [--quiet]
    chetaev-lab list-scenarios
    chetaev-lab validate <config-path>

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 3 a check
ran but missed its tolerance.
"""
from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .runner import RunError, run
from .scenarios import describe, load_scenario, scenario_ids

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_TOLERANCE = 0, 1, 2, 3
ENV_OUT = "CHETAEV_LAB_OUT"


def _load(target: str):
    if os.path.isfile(target):
        return load_config(target)
    if target in scenario_ids():
        return load_scenario(target)
    raise ConfigError([f"{target!r} is neither a config file nor a scenario id; "
                       f"valid ids: {', '.join(scenario_ids())}"])


def _out_dir(args, cfg) -> str:
    if args.out:
        return args.out
    if cfg.output["directory"]:
        return cfg.output["directory"]
    root = os.environ.get(ENV_OUT) or "runs"
    return os.path.join(root, cfg.name)


def _cmd_run(args) -> int:
    try:
        cfg = _load(args.target)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(["--seed must be non-negative"])
            cfg = cfg.with_changes("analysis", seed=args.seed)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    out = _out_dir(args, cfg)
    try:
        man = run(cfg, out, quiet=args.quiet)
    except RunError as exc:
        print(f"error: {exc} (manifest: {exc.manifest_path})", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(f"{cfg.name}: {man.status} -> {out}")
    return EXIT_OK if man.passed else EXIT_TOLERANCE


def _cmd_list(args) -> int:
    for name, summary in describe():
        print(f"{name:<22} {summary}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        cfg = load_config(args.path)
    except FileNotFoundError:
        print(f"error: no such file {args.path!r}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    if not args.quiet:
        print(f"{args.path}: ok ({len(cfg.analysis['operations'])} operations)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chetaev-lab", description="Stability-condition and quantum-potential laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a config file or a built-in scenario")
    r.add_argument("target", help="config path or scenario id")
    r.add_argument("--out", help=f"output directory (default: ${ENV_OUT}/<name> or runs/<name>)")
    r.add_argument("--seed", type=int, help="override [analysis] seed")
    r.add_argument("--quiet", action="store_true", help="print errors only")
    r.set_defaults(func=_cmd_run)

    ls = sub.add_parser("list-scenarios", help="list built-in scenarios")
    ls.set_defaults(func=_cmd_list)

    v = sub.add_parser("validate", help="parse and validate a config file")
    v.add_argument("path")
    v.add_argument("--quiet", action="store_true")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
