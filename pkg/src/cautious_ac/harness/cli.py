"""Command-line entry point: ``cautious-ac {solve,compare,sweep,check-bounds,metrics}``.

Exit codes: 0 success, 2 invalid config or IO error, 3 bound violation or
algorithm failure.
"""

import argparse
import sys

from .config import ConfigError, load_config
from .experiment import (
    BoundViolation,
    RunFailure,
    check_bounds,
    metrics_from_records,
    read_records,
    render,
    run_compare,
    run_experiment,
    run_sweep,
    write_output,
)
from .metrics import DIVISORS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors already; keep messages on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p, needs_config=True):
    if needs_config:
        p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output file (default: config output_path, else stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default: config emit, else csv)")
    p.add_argument("--seed", type=int, help="base algorithm seed; repeat r uses seed + r")


def build_parser():
    parser = _Parser(prog="cautious-ac", description="Exact tabular cautious actor-critic experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, text in (
        ("solve", "run one algorithm for the configured number of repeats"),
        ("compare", "run every entry of 'presets' on a shared environment"),
        ("sweep", "run the cartesian grid in 'sweep'"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--osc-divisor", choices=DIVISORS, default="drops", help="divisor of the RMS drop")

    p = sub.add_parser("check-bounds", help="assert the consecutive-policy TV bound at every iteration")
    _common(p)

    p = sub.add_parser("metrics", help="recompute oscillation metrics from an emitted CSV or JSON file")
    p.add_argument("input", help="file written by solve/compare/sweep")
    _common(p, needs_config=False)
    p.add_argument("--osc-divisor", choices=DIVISORS, help="divisor of the RMS drop (default: emit both)")
    return parser


def _emit(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        write_output(text, path)


def _run(args):
    if args.command == "metrics":
        rows = read_records(args.input)
        divisors = DIVISORS if args.osc_divisor is None else (args.osc_divisor,)
        _emit(render(metrics_from_records(rows, divisors), args.format or "csv"), args.out)
        return EXIT_OK

    config = load_config(args.config)
    fmt = args.format or config.emit
    out = args.out if args.out is not None else config.output_path

    if args.command == "check-bounds":
        result = check_bounds(config, seed=args.seed, log=lambda msg: print(msg, file=sys.stderr))
        if out is not None:
            _emit(render(result, fmt), out)
        print("check-bounds: ok", file=sys.stderr)
        return EXIT_OK

    runner = {"solve": run_experiment, "compare": run_compare, "sweep": run_sweep}[args.command]
    result = runner(config, seed=args.seed, divisor=args.osc_divisor)
    _emit(render(result, fmt), out)
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BoundViolation as exc:
        print(f"violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except RunFailure as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
