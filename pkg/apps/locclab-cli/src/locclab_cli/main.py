"""locclab: decide one-way LOCC distinguishability of unilaterally transformable state sets.

Exit codes: 0 decision reached, 2 undecided (no witness found and no certificate), 1 usage, parse or internal error.
"""

import argparse
import logging
import sys
from pathlib import Path

from core.config import settings
from core.spec_schema import StateSetSpecError, load_state_set
from witness_analysis.prover import Outcome

from locclab_cli.pipeline import DecideOptions, InconsistentVerdictError, decide_state_set, sweep, trace_for
from locclab_cli.reporting import emit, render_report, render_sweep

logger = logging.getLogger(__name__)

EXIT_DECIDED = 0
EXIT_ERROR = 1
EXIT_UNDECIDED = 2


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--restarts", type=int, default=settings.RESTARTS, help="witness search restarts")
    common.add_argument("--seed", type=int, default=settings.SEED, help="root seed for every random draw")
    common.add_argument("--max-iters", type=int, default=settings.MAX_ITERS, help="gradient iterations per restart")
    common.add_argument("--out", type=Path, default=None, help="write the output here instead of stdout")
    common.add_argument("--format", choices=["csv", "text"], default="text", dest="fmt")
    common.add_argument("--quiet", action="store_true", help="no progress bars")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="locclab", description="One-way LOCC distinguishability of unilaterally transformable state sets."
    )
    commands = parser.add_subparsers(dest="command", required=True)

    decide = commands.add_parser("decide", parents=[common], help="run the full pipeline on a state-set file")
    decide.add_argument("path", type=Path)
    decide.add_argument("--skip-prover", action="store_true")
    decide.add_argument("--skip-sim", action="store_true")

    sweep_cmd = commands.add_parser("sweep", parents=[common], help="decide every N-subset of Weyl indices in d")
    sweep_cmd.add_argument("--d", type=int, required=True, dest="d")
    sweep_cmd.add_argument("--N", type=int, required=True, dest="n")
    sweep_cmd.add_argument("--limit", type=int, default=None, help="only the first K subsets")
    sweep_cmd.add_argument("--no-canonical", action="store_true", help="run every subset, not one per canonical form")
    sweep_cmd.add_argument("--skip-prover", action="store_true")
    sweep_cmd.add_argument("--skip-sim", action="store_true")

    trace = commands.add_parser("trace", parents=[common], help="print the infeasibility proof trace of a Weyl set")
    trace.add_argument("path", type=Path)
    return parser


def _options(args: argparse.Namespace) -> DecideOptions:
    return DecideOptions(
        restarts=args.restarts,
        seed=args.seed,
        max_iters=args.max_iters,
        skip_prover=getattr(args, "skip_prover", False),
        skip_sim=getattr(args, "skip_sim", False),
        progress=not args.quiet,
    )


def cmd_decide(args: argparse.Namespace) -> int:
    _, ss = load_state_set(args.path)
    report = decide_state_set(ss, _options(args), source=str(args.path))
    if report.trace_text is not None and report.prover is not None and args.out is not None:
        trace_path = args.out.with_suffix(".trace")
        emit(report.trace_text, trace_path)
        report.prover.trace_path = str(trace_path)
    emit(render_report(report, args.fmt), args.out)
    return EXIT_DECIDED if report.decided else EXIT_UNDECIDED


def cmd_sweep(args: argparse.Namespace) -> int:
    table = sweep(args.d, args.n, _options(args), limit=args.limit, canonical=not args.no_canonical)
    emit(render_sweep(table, args.fmt), args.out)
    return EXIT_DECIDED


def cmd_trace(args: argparse.Namespace) -> int:
    _, ss = load_state_set(args.path)
    proof = trace_for(ss)
    emit(proof.to_text(), args.out)
    return EXIT_DECIDED if proof.outcome is Outcome.INFEASIBLE else EXIT_UNDECIDED


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # usage errors map to exit 1
        return EXIT_DECIDED if e.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=settings.LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"decide": cmd_decide, "sweep": cmd_sweep, "trace": cmd_trace}
    try:
        return handlers[args.command](args)
    except InconsistentVerdictError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (StateSetSpecError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
