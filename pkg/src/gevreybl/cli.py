"""Command line: run, verify, resume, inspect.

Exit codes: 0 success, 1 failed run or check, 2 configuration error.
``GEVREYBL_OUTPUT_DIR`` overrides the output directory of run and resume.
"""

from __future__ import annotations

import argparse
import json
import sys

from .grid import ConfigurationError, GridMismatchError
from .spaces import PastTStarError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parse_sets(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _report(manifest) -> int:
    print(f"termination: {manifest.termination}  steps: {manifest.steps}  t: {manifest.t_final:.6g}")
    c = manifest.constants
    print(f"gamma={c['gamma']:.4g} ({c['gamma_source']})  k={c['k']:.4g}  eta={c['eta']:.4g}")
    if manifest.error:
        print(f"error: {manifest.error}")
    return EXIT_OK if manifest.ok else EXIT_FAIL


def cmd_run(args) -> int:
    from .runner import RunConfig, run

    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = _parse_sets(args.set)
    if args.output:
        overrides["output_dir"] = args.output
    if overrides:
        cfg = RunConfig.from_dict({**cfg.to_dict(), **overrides})
    return _report(run(cfg))


def cmd_resume(args) -> int:
    from .runner import resume

    overrides = _parse_sets(args.set)
    if args.output:
        overrides["output_dir"] = args.output
    return _report(resume(args.snapshot, overrides))


def cmd_verify(args) -> int:
    from .checks import SUITES, run_suite

    if args.suite != "all" and args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {', '.join([*SUITES, 'all'])}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(args.suite)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_inspect(args) -> int:
    from .runner import read_snapshot_header

    print(json.dumps(read_snapshot_header(args.snapshot), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gevreybl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a simulation from a JSON config")
    r.add_argument("config", nargs="?", help="JSON config file (defaults if omitted)")
    r.add_argument("--output", help="output directory")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", help="dyadic | spaces | solver-mms | aux-residuals | monitors | all")
    v.set_defaults(fn=cmd_verify)

    s = sub.add_parser("resume", help="continue a run from a snapshot")
    s.add_argument("snapshot")
    s.add_argument("--output", help="output directory")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.set_defaults(fn=cmd_resume)

    i = sub.add_parser("inspect", help="print a snapshot header")
    i.add_argument("snapshot")
    i.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, GridMismatchError, PastTStarError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
