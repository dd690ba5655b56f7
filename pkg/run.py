"""
Command-line front end for the quantum gambling simulator
"""
import argparse
import logging
import math
import sys
from typing import List, Optional

from pydantic import ValidationError

import config
from src.channels import listen
from src.exceptions import (
    ChannelClosedError,
    ChannelTimeoutError,
    GamblingError,
    ParameterError,
    ProtocolViolationError,
)
from src.harness import SCALING_GAMES, ExperimentSpec, error_injection_report, run_experiment, scaling_analysis, sweep
from src.network_play import CasinoServer, PlayerClient
from src.report_generator import FORMATS, ReportGenerator
from src.strategies import ALICE_GRAMMAR, BOB_GRAMMAR, parse_alice, parse_bob
from src.strategy_analysis import analyze, coin_toss_win_probability, delta_closed, log_spaced, verify_range

logger = logging.getLogger("run")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAILED = 2
EXIT_NETWORK = 3

NETWORK_ERRORS = (ChannelClosedError, ChannelTimeoutError, ProtocolViolationError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be a finite positive number: {text}")
    return value


def _count(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text}")
    return value


def _rate(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1]: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quantum-gambling", description="Two-party quantum gambling simulator")
    parser.add_argument("--log-level", default=None, help="Logging level (default from LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="Closed-form guaranteed gain table")
    p.add_argument("--R", type=_positive, nargs="+", required=True)
    p.add_argument("--format", choices=FORMATS, default="table")

    p = sub.add_parser("verify", help="Numeric minimax vs closed form")
    p.add_argument("--r-min", type=_positive, default=1.0)
    p.add_argument("--r-max", type=_positive, default=1e6)
    p.add_argument("--points", type=_count, default=25)
    p.add_argument("--tol", type=_positive, default=1e-6)
    p.add_argument("--self-test", action="store_true", help="Perturb the closed form at the largest R; must fail")
    p.add_argument("--format", choices=FORMATS, default="table")

    p = sub.add_parser("simulate", help="Monte Carlo experiment")
    p.add_argument("--R", type=_positive, required=True)
    p.add_argument("--games", type=_count, required=True)
    p.add_argument("--alice", default="honest", help=ALICE_GRAMMAR)
    p.add_argument("--bob", default="honest", help=BOB_GRAMMAR)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--p-err", type=_rate, default=0.0)
    p.add_argument("--parallelism", type=_count, default=1)
    p.add_argument("--records", default=None, help="Write every GameRecord as JSON lines to this path")
    p.add_argument("--format", choices=FORMATS, default="table")

    p = sub.add_parser("sweep", help="Experiments over reward ratios and strategy pairs")
    p.add_argument("--R", type=_positive, nargs="+", required=True)
    p.add_argument("--alice", nargs="+", default=["honest"], help=ALICE_GRAMMAR)
    p.add_argument("--bob", nargs="+", default=["honest"], help=BOB_GRAMMAR)
    p.add_argument("--games", type=_count, required=True)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--p-err", type=_rate, default=0.0)
    p.add_argument("--parallelism", type=_count, default=1)
    p.add_argument("--format", choices=FORMATS, default="csv")

    p = sub.add_parser("scaling", help="Spread of the session total against session length")
    p.add_argument("--R", type=_positive, required=True)
    p.add_argument("--pool-games", type=_count, default=1_000_000, help="Games played, cut into sessions of each length")
    p.add_argument("--lengths", type=_count, nargs="+", default=list(SCALING_GAMES), help="Session lengths N")
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--parallelism", type=_count, default=1)
    p.add_argument("--format", choices=FORMATS, default="table")

    p = sub.add_parser("serve", help="Host the casino (Alice) and the physics oracle")
    p.add_argument("--role", choices=["alice"], default="alice")
    p.add_argument("--port", type=int, default=config.GAMBLING_PORT)
    p.add_argument("--host", default=config.GAMBLING_HOST)
    p.add_argument("--alice", default="honest", help=ALICE_GRAMMAR)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--p-err", type=_rate, default=0.0)
    p.add_argument("--timeout", type=_positive, default=config.RECV_TIMEOUT)

    p = sub.add_parser("connect", help="Play as Bob against a remote casino")
    p.add_argument("--role", choices=["bob"], default="bob")
    p.add_argument("--addr", default=f"{config.GAMBLING_HOST}:{config.GAMBLING_PORT}")
    p.add_argument("--R", type=_positive, required=True)
    p.add_argument("--games", type=_count, required=True)
    p.add_argument("--bob", default="honest", help=BOB_GRAMMAR)
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--p-err", type=_rate, default=0.0, help="Channel error rate the monitor should expect")
    p.add_argument("--timeout", type=_positive, default=config.RECV_TIMEOUT)
    return parser


def cmd_analyze(args) -> int:
    print(ReportGenerator.analysis(analyze(args.R), args.format), end="")
    if args.format == "table" and 1.0 in args.R:
        print(f"\nR=1 as a coin toss: Bob wins with probability at least {coin_toss_win_probability(1.0):.3f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.r_min > args.r_max:
        raise UsageError(f"--r-min {args.r_min} exceeds --r-max {args.r_max}")
    delta_formula = delta_closed
    if args.self_test:
        perturb_at = log_spaced(args.r_min, args.r_max, args.points)[-1]

        def delta_formula(R: float) -> float:
            return delta_closed(R) + (10.0 * args.tol if R == perturb_at else 0.0)

    report = verify_range(args.r_min, args.r_max, args.points, args.tol, delta_formula=delta_formula)
    print(ReportGenerator.verification(report, args.format), end="")
    if report.passed:
        print(f"\n✅ All {len(report.points)} points within {args.tol:g} (max deviation {report.max_deviation:.3e})")
        return EXIT_OK
    located = ", ".join(f"{p.R:g}" for p in report.failures)
    print(f"\n❌ Deviation above {args.tol:g} at R = {located}")
    return EXIT_VERIFY_FAILED


def _spec(args) -> ExperimentSpec:
    return ExperimentSpec(
        R=args.R, games=args.games, alice=args.alice, bob=args.bob,
        p_err=args.p_err, seed=args.seed, parallelism=args.parallelism,
    )


def cmd_simulate(args) -> int:
    spec = _spec(args)
    keep = bool(args.records)
    stats = error_injection_report(spec, keep) if spec.p_err > 0 else run_experiment(spec, keep)
    print(ReportGenerator.experiments([stats], args.format), end="")
    if args.format == "table":
        print()
        print(ReportGenerator.outcome_counts(stats), end="")
        print(f"\nVerdict: {stats.verdict.verdict.value}")
        if stats.verdict.stop:
            print("Cheating suspected: the game should be stopped")
    if args.records:
        with open(args.records, "w", encoding="utf-8") as fh:
            for record in stats.records:
                fh.write(record.to_line() + "\n")
        logger.info("Wrote %d records to %s", len(stats.records), args.records)
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = [(a, b) for a in args.alice for b in args.bob]
    results = sweep(args.R, grid, args.games, seed=args.seed, p_err=args.p_err, parallelism=args.parallelism)
    print(ReportGenerator.experiments(results, args.format), end="")
    return EXIT_OK


def cmd_scaling(args) -> int:
    report = scaling_analysis(
        args.R,
        pool_games=args.pool_games,
        session_lengths=args.lengths,
        seed=args.seed,
        parallelism=args.parallelism,
    )
    print(ReportGenerator.scaling(report, args.format), end="")
    if args.format == "table":
        print(f"\nMean-total exponent {report.mean_exponent:.3f}; single-game spread {report.single_game_stddev:.4f}")
    return EXIT_OK


def _print_summary(side: str, summary) -> None:
    print(f"Settlement summary ({side})")
    print("-" * 50)
    for line in summary.lines():
        print(line)


def cmd_serve(args) -> int:
    if args.alice.strip() == "eps=worst":
        raise UsageError("eps=worst depends on R, which the player chooses; give an explicit eps=<x>")
    alice = parse_alice(args.alice, 1.0)
    server = CasinoServer(alice, seed=args.seed, p_err=args.p_err, timeout=args.timeout)
    with listen(args.port, args.host) as listener:
        host, port = listener.address
        print(f"Casino listening on {host}:{port}")
        summary = server.serve(listener)
    _print_summary("alice", summary)
    return EXIT_NETWORK if _network_cut(server.records) else EXIT_OK


def _network_cut(records) -> bool:
    return bool(records) and records[-1].note.startswith("channel failure")


def cmd_connect(args) -> int:
    bob = parse_bob(args.bob, args.R)
    client = PlayerClient(bob, args.R, args.games, seed=args.seed, expected_error_rate=args.p_err, timeout=args.timeout)
    summary = client.run(args.addr)
    _print_summary("bob", summary)
    return EXIT_NETWORK if _network_cut(client.records) else EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "scaling": cmd_scaling,
    "serve": cmd_serve,
    "connect": cmd_connect,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    config.configure_logging(args.log_level)

    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError, ValidationError) as e:
        print(f"Usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NETWORK_ERRORS as e:
        print(f"❌ Network failure: {e}", file=sys.stderr)
        return EXIT_NETWORK
    except GamblingError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
