"""Command-line entry point.

Exit codes: 0 on success, 1 on invalid input or a failed check, 2 on a
runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from mirrorstein import __version__, checks
from mirrorstein.harness import SpecError, load_spec, run_experiment
from mirrorstein.samplers import SamplerError

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mirrorstein", description="Mirrored Stein samplers on constrained domains.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("run", help="run an experiment spec")
    p.add_argument("spec", help="path to a TOML experiment spec")

    p = sub.add_parser("identity-check", help="Monte-Carlo Stein identity checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--draws", type=int, default=100_000)

    p = sub.add_parser("grad-check", help="finite-difference derivative checks")
    p.add_argument("--seed", type=int, default=0)

    sub.add_parser("version", help="print the package version")
    return parser


def _report(results) -> int:
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_INVALID


def _cmd_run(args) -> int:
    spec = load_spec(args.spec)
    results = run_experiment(spec)
    for r in results:
        parts = [f"{r.sampler} rate={r.rate:g} seed={r.seed}"]
        if r.final_energy_distance is not None:
            parts.append(f"energy_distance={r.final_energy_distance:.6g}")
        if r.test_log_predictive is not None:
            parts.append(f"val_lp={r.val_log_predictive:.6g} test_lp={r.test_log_predictive:.6g}")
        print(" ".join(parts))
    print(f"wrote {spec.output_dir / 'summary.csv'}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    try:
        if args.command == "version":
            print(__version__)
            return EXIT_OK
        if args.command == "identity-check":
            if args.draws < 2:
                print("error: --draws must be >= 2", file=sys.stderr)
                return EXIT_INVALID
            res = checks.identity_checks(args.seed, args.draws)
            res.append(checks.negative_control(args.seed, args.draws))
            return _report(res)
        if args.command == "grad-check":
            return _report(checks.finite_difference_checks(args.seed))
        return _cmd_run(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SamplerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
