"""Command-line entry points: check, run, enumerate, serve.

Exit codes: 0 success/halted, 1 input errors, 2 failed run, 3 stuck run,
4 limits exhausted, 64 usage errors.  Traces and enumeration output go to
stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys

from .histories import HistoryError
from .origins import check_reply_location_placement
from .parser import ParseError, Scenario, parse_program, parse_scenario, parse_state
from .runtime import (
    EnumerationBound,
    RandomEnv,
    RuntimeFault,
    ScriptedEnv,
    SilentEnv,
    enumerate_attainable,
    run,
)
from .service import serve_forever
from .structures import Element, FALSE, TRUE, UNDEF, StructureError
from .syntax import SyntaxError_, desugar_reply_locations, validate_program

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_FAILED = 2
EXIT_STUCK = 3
EXIT_LIMITS = 4
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _parse_alphabet(text: str) -> list[Element]:
    values = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if chunk in ("true", "false", "undef"):
            values.append({"true": TRUE, "false": FALSE, "undef": UNDEF}[chunk])
        elif chunk.startswith("'") and chunk.endswith("'"):
            values.append(Element("atom", chunk[1:-1]))
        else:
            try:
                values.append(Element("int", int(chunk)))
            except ValueError:
                print(f"error: bad alphabet value {chunk!r}", file=sys.stderr)
                raise SystemExit(EXIT_USAGE)
    return values


def _load_program(path: str):
    program = parse_program(_read(path), path)
    return desugar_reply_locations(program)


def cmd_check(args) -> int:
    try:
        program = _load_program(args.program)
    except (ParseError, SyntaxError_) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    diagnostics = validate_program(program)
    diagnostics += check_reply_location_placement(program)
    for d in diagnostics:
        print(d.render(), file=sys.stderr)
    return EXIT_INPUT if any(d.severity == "error" for d in diagnostics) else EXIT_OK


def cmd_run(args) -> int:
    try:
        program = _load_program(args.program)
        errors = [d for d in validate_program(program) if d.severity == "error"]
        if errors:
            for d in errors:
                print(d.render(), file=sys.stderr)
            return EXIT_INPUT
        state = parse_state(_read(args.state), program.vocabulary, args.state)
        scenario = Scenario(())
        if args.scenario:
            scenario = parse_scenario(_read(args.scenario), args.scenario)
        if args.seed is not None:
            alphabet = _parse_alphabet(args.alphabet or "0,1")
            env = RandomEnv(args.seed, alphabet)
        elif args.scenario:
            env = ScriptedEnv(scenario)
        else:
            env = SilentEnv()
        result = run(program, state, env, scenario,
                     max_steps=args.max_steps, max_rounds=args.max_rounds)
    except (ParseError, SyntaxError_, StructureError, HistoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeFault as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(result.trace.to_json() + "\n" if args.json
                     else result.trace.render())
    return {
        "halted": EXIT_OK,
        "failed": EXIT_FAILED,
        "stuck": EXIT_STUCK,
        "limits": EXIT_LIMITS,
    }[result.verdict]


def cmd_enumerate(args) -> int:
    try:
        program = _load_program(args.program)
        errors = [d for d in validate_program(program) if d.severity == "error"]
        if errors:
            for d in errors:
                print(d.render(), file=sys.stderr)
            return EXIT_INPUT
        state = parse_state(_read(args.state), program.vocabulary, args.state)
        alphabet = _parse_alphabet(args.alphabet)
        entries = enumerate_attainable(
            program, state, alphabet,
            max_rounds=args.max_rounds, max_round_width=args.max_width,
        )
    except (ParseError, SyntaxError_, StructureError, HistoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EnumerationBound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RuntimeFault as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for entry in entries:
        print(entry.render())
    return EXIT_OK


def cmd_serve(args) -> int:
    serve_forever(args.host, args.port)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="iasm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="static diagnostics for a program")
    p_check.add_argument("program")
    p_check.set_defaults(func=cmd_check)

    p_run = sub.add_parser("run", help="run a program against a scenario")
    p_run.add_argument("program")
    p_run.add_argument("state")
    p_run.add_argument("scenario", nargs="?")
    p_run.add_argument("--max-steps", type=int, default=50)
    p_run.add_argument("--max-rounds", type=int, default=100)
    p_run.add_argument("--seed", type=int, help="use the seeded-random environment")
    p_run.add_argument("--alphabet", help="reply values for the random environment")
    p_run.add_argument("--json", action="store_true",
                       help="machine-readable trace on stdout")
    p_run.set_defaults(func=cmd_run)

    p_enum = sub.add_parser("enumerate",
                            help="exhaustively enumerate final attainable histories")
    p_enum.add_argument("program")
    p_enum.add_argument("state")
    p_enum.add_argument("--alphabet", required=True, help="comma-separated values")
    p_enum.add_argument("--max-rounds", type=int, default=3)
    p_enum.add_argument("--max-width", type=int, default=None)
    p_enum.set_defaults(func=cmd_enumerate)

    p_serve = sub.add_parser("serve", help="start the interactive stepper service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8642)
    p_serve.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
