"""
Monte Carlo Harness
Coordinates batches of games: plays N games for a strategy pair, aggregates
gains and outcome frequencies, and compares them with the analytic
predictions.
"""
from __future__ import annotations

import logging
import math
import multiprocessing as mp
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

import config
from src.exceptions import ParameterError
from src.physics_oracle import PhysicsOracle
from src.protocol_engine import GameOutcome, GameParams, GameRecord, run_game
from src.quantum_core import MODE_A, MODE_B, EpsilonPreparation, prepare, prob_detect, prob_in_mode, project_mode, split_b
from src.session_monitor import SessionVerdict, session_monitor
from src.strategies import AliceStrategyCfg, BobStrategyCfg, BobVariant, parse_alice, parse_bob
from src.strategy_analysis import (
    advisory_ratio,
    gain_from_probs,
    prob_detect_closed,
    prob_found_closed,
    worst_case_detection_prob,
)

logger = logging.getLogger(__name__)

CHUNKS_PER_WORKER = 4
SCALING_GAMES = (100, 1000, 10000)

GameSummary = Tuple[str, float, float]


class ExperimentSpec(BaseModel):
    """One batch of games; strategy descriptors follow the CLI grammar"""

    model_config = ConfigDict(frozen=True)

    R: float = Field(gt=0, allow_inf_nan=False)
    games: int = Field(ge=1)
    alice: str = "honest"
    bob: str = "honest"
    p_err: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = Field(default=config.DEFAULT_SEED, ge=0)
    parallelism: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_descriptors(self) -> "ExperimentSpec":
        parse_alice(self.alice, self.R)
        parse_bob(self.bob, self.R)
        return self

    def strategies(self) -> Tuple[AliceStrategyCfg, BobStrategyCfg]:
        return parse_alice(self.alice, self.R), parse_bob(self.bob, self.R)


class ExperimentStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    spec: ExperimentSpec
    alice_strategy: str
    bob_strategy: str
    games: int
    settled: int
    counts: Dict[str, int]
    mean_bob_gain: float
    mean_alice_gain: float
    stddev_bob_gain: float
    stderr_bob_gain: float
    total_bob_gain: float
    total_alice_gain: float
    canceled_rate: float
    disputed_rate: float
    analytic_reference: Optional[float] = None
    z_score: Optional[float] = None
    predicted_disputed_rate: Optional[float] = None
    advisory_ratio: float
    verdict: SessionVerdict
    # filled only when the experiment is asked to keep them
    records: Optional[List[GameRecord]] = Field(default=None, exclude=True, repr=False)


def _outcome_probabilities(alice: AliceStrategyCfg, eta: float) -> Tuple[float, float, float]:
    """(P_b, P_D, probability the particle is in A after Bob misses it)"""
    prep = alice.preparation()
    if isinstance(prep, EpsilonPreparation):
        eps = prep.epsilon
        p_b = prob_found_closed(eta, eps)
        p_d = float(prob_detect_closed(eta, eps))
        denominator = 1.0 + 2.0 * eps + eta * (1.0 - 2.0 * eps)
        q_a = (1.0 + 2.0 * eps) / denominator if denominator > 0 else 0.0
        return p_b, p_d, q_a

    split = split_b(prepare(prep), eta)
    p_b = prob_in_mode(split, MODE_B)
    if p_b >= 1.0 - config.IDENTITY_TOL:
        return 1.0, 0.0, 0.0
    missed = project_mode(split, MODE_B, found=False).post_state
    return p_b, prob_detect(missed, eta), prob_in_mode(missed, MODE_A)


def analytic_reference(R: float, alice: AliceStrategyCfg, bob: BobStrategyCfg) -> Optional[float]:
    """Predicted mean Bob gain per settled game, or None when nothing settles"""
    p_b, p_d, q_a = _outcome_probabilities(alice, bob.eta)
    miss = 1.0 - p_b

    if bob.variant is BobVariant.HONEST:
        return gain_from_probs(p_b, p_d, R)
    if bob.variant is BobVariant.NEVER_VERIFY:
        return 2.0 * p_b - 1.0
    if bob.variant is BobVariant.FALSE_CLAIM:
        c = bob.claim_prob
        verified = p_d * R - (1.0 - p_d)
        return p_b + miss * (c * (1.0 - 2.0 * q_a) + (1.0 - c) * verified)

    # liar
    q = bob.lie_prob
    reported = p_d + (1.0 - p_d) * q
    if not alice.is_reference:
        return p_b + miss * (reported * R - (1.0 - reported))
    # detection claims against the equal superposition are disputed, not settled
    settled = p_b + miss * (1.0 - reported)
    if settled <= 0.0:
        return None
    return (p_b - miss * (1.0 - reported)) / settled


def predicted_disputed_rate(alice: AliceStrategyCfg, bob: BobStrategyCfg) -> Optional[float]:
    """Expected Disputed frequency of a Liar against the equal superposition"""
    if bob.variant is not BobVariant.LIAR or not alice.is_reference:
        return None
    p_b, p_d, _ = _outcome_probabilities(alice, bob.eta)
    return (1.0 - p_b) * (p_d + (1.0 - p_d) * bob.lie_prob)


def _summary(record: GameRecord) -> GameSummary:
    return record.outcome.value, record.bob_gain, record.alice_gain


def _play_chunk(args) -> list:
    """Worker: play games [start, stop); full records or (outcome, bob_gain, alice_gain) per game"""
    R, seed, start, stop, alice, bob, p_err, keep_records = args
    oracle = PhysicsOracle()
    played = []
    for index in range(start, stop):
        record = run_game(GameParams(R=R, seed=seed, index=index), alice, bob, oracle=oracle, p_err=p_err)
        played.append(record if keep_records else _summary(record))
    return played


def _chunks(games: int, pieces: int) -> List[Tuple[int, int]]:
    bounds = np.linspace(0, games, min(pieces, games) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def play_games(spec: ExperimentSpec) -> Iterator[GameRecord]:
    """Yield the full record of every game in index order"""
    alice, bob = spec.strategies()
    oracle = PhysicsOracle()
    for index in range(spec.games):
        yield run_game(GameParams(R=spec.R, seed=spec.seed, index=index), alice, bob, oracle=oracle, p_err=spec.p_err)


def _play_all(spec: ExperimentSpec, alice: AliceStrategyCfg, bob: BobStrategyCfg, keep_records: bool = False) -> list:
    """Play every game of ``spec`` in index order, in worker processes when ``parallelism`` > 1"""
    if spec.parallelism == 1:
        return _play_chunk((spec.R, spec.seed, 0, spec.games, alice, bob, spec.p_err, keep_records))
    tasks = [
        (spec.R, spec.seed, start, stop, alice, bob, spec.p_err, keep_records)
        for start, stop in _chunks(spec.games, spec.parallelism * CHUNKS_PER_WORKER)
    ]
    with mp.Pool(processes=spec.parallelism) as pool:
        parts = pool.map(_play_chunk, tasks)
    return [played for part in parts for played in part]


def summarize(
    spec: ExperimentSpec,
    alice: AliceStrategyCfg,
    bob: BobStrategyCfg,
    summaries: Sequence[GameSummary],
) -> ExperimentStats:
    """
    Aggregate per-game summaries into experiment statistics

    Args:
        spec: The experiment the summaries came from
        alice: Parsed Alice strategy
        bob: Parsed Bob strategy
        summaries: (outcome, bob_gain, alice_gain) per game, in index order

    Returns:
        ExperimentStats; Disputed and Canceled games count but stay out of the gain statistics
    """
    counts = {outcome.value: 0 for outcome in GameOutcome}
    for outcome, _, _ in summaries:
        counts[outcome] += 1

    settled_gains = [(b, a) for outcome, b, a in summaries if GameOutcome(outcome).settled]
    settled = len(settled_gains)
    bob_gains = np.array([b for b, _ in settled_gains], dtype=float)
    total_bob = math.fsum(bob_gains)
    total_alice = math.fsum(a for _, a in settled_gains)
    mean_bob = total_bob / settled if settled else 0.0
    mean_alice = total_alice / settled if settled else 0.0
    stddev = float(np.std(bob_gains, ddof=1)) if settled > 1 else 0.0
    stderr = stddev / math.sqrt(settled) if settled else 0.0

    reference = analytic_reference(spec.R, alice, bob)
    z_score = None
    if reference is not None and settled:
        if stderr > 0:
            z_score = (mean_bob - reference) / stderr
        else:
            z_score = 0.0 if math.isclose(mean_bob, reference, abs_tol=1e-12) else math.copysign(math.inf, mean_bob - reference)

    n = len(summaries)
    outcomes = [outcome for outcome, _, _ in summaries]
    return ExperimentStats(
        spec=spec,
        alice_strategy=alice.descriptor,
        bob_strategy=bob.descriptor,
        games=n,
        settled=settled,
        counts=counts,
        mean_bob_gain=mean_bob,
        mean_alice_gain=mean_alice,
        stddev_bob_gain=stddev,
        stderr_bob_gain=stderr,
        total_bob_gain=total_bob,
        total_alice_gain=total_alice,
        canceled_rate=counts[GameOutcome.CANCELED.value] / n,
        disputed_rate=counts[GameOutcome.DISPUTED.value] / n,
        analytic_reference=reference,
        z_score=z_score,
        predicted_disputed_rate=predicted_disputed_rate(alice, bob),
        advisory_ratio=advisory_ratio(n, spec.R),
        verdict=session_monitor(outcomes, expected_error_rate=spec.p_err),
    )


def run_experiment(spec: ExperimentSpec, keep_records: bool = False) -> ExperimentStats:
    """
    Play ``spec.games`` independent games and aggregate them

    Args:
        spec: Experiment specification
        keep_records: Attach every GameRecord, in index order, as ``stats.records``

    Returns:
        ExperimentStats, identical for any ``parallelism``
    """
    alice, bob = spec.strategies()
    logger.info(
        "Running %d games at R=%g: alice=%s bob=%s p_err=%g (%d worker(s))",
        spec.games, spec.R, alice.descriptor, bob.descriptor, spec.p_err, spec.parallelism,
    )
    played = _play_all(spec, alice, bob, keep_records)
    if keep_records:
        stats = summarize(spec, alice, bob, [_summary(r) for r in played]).model_copy(update={"records": played})
    else:
        stats = summarize(spec, alice, bob, played)
    logger.info(
        "Mean Bob gain %.6f over %d settled games (reference %s, z=%s)",
        stats.mean_bob_gain, stats.settled, stats.analytic_reference, stats.z_score,
    )
    return stats


def sweep(
    R_values: Sequence[float],
    strategy_grid: Sequence[Tuple[str, str]],
    games: int,
    seed: int = config.DEFAULT_SEED,
    p_err: float = 0.0,
    parallelism: int = 1,
) -> List[ExperimentStats]:
    """
    Run one experiment per reward ratio and strategy pair

    Args:
        R_values: Reward ratios
        strategy_grid: (alice, bob) descriptor pairs
        games: Games per experiment
        seed: Session seed shared by every experiment
        p_err: Channel corruption probability
        parallelism: Worker processes per experiment

    Returns:
        Statistics in row order: R outer, strategy pair inner
    """
    if not R_values or not strategy_grid:
        raise ParameterError("A sweep needs at least one reward ratio and one strategy pair")
    specs = [
        ExperimentSpec(R=R, games=games, alice=alice, bob=bob, p_err=p_err, seed=seed, parallelism=parallelism)
        for R in R_values
        for alice, bob in strategy_grid
    ]
    results = []
    for i, spec in enumerate(specs, start=1):
        logger.info("Sweep %d/%d", i, len(specs))
        results.append(run_experiment(spec))
    return results


def error_injection_report(spec: ExperimentSpec, keep_records: bool = False) -> ExperimentStats:
    """
    Run with channel corruption and judge the cancellation rate against it

    Args:
        spec: Experiment specification; ``p_err`` must lie in [0, 1)
        keep_records: Passed on to run_experiment

    Returns:
        ExperimentStats whose verdict accounts for ``p_err``
    """
    if not 0.0 <= spec.p_err < 1.0:
        raise ParameterError(f"Error rate must lie in [0, 1), got {spec.p_err}")
    floor = worst_case_detection_prob(spec.R)
    if spec.p_err >= floor:
        logger.warning(
            "Error rate %g is at or above the worst-case detection probability %.3e at R=%g; "
            "channel errors drown the verification signal",
            spec.p_err, floor, spec.R,
        )
    return run_experiment(spec, keep_records)


class ScalingPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    games: int
    sessions: int
    mean_total: float
    stddev_total: float


class ScalingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    R: float
    pool_games: int
    single_game_stddev: float
    points: List[ScalingPoint]
    stddev_exponent: float
    mean_exponent: float


def scaling_analysis(
    R: float,
    pool_games: int = 1_000_000,
    session_lengths: Sequence[int] = SCALING_GAMES,
    seed: int = config.DEFAULT_SEED,
    parallelism: int = 1,
) -> ScalingReport:
    """
    Measure how the total gain of an N-game honest session spreads with N

    The pool of games is played once, in index order, and cut into
    consecutive blocks of N games; every block is one session and no game
    belongs to two sessions of the same length. Any correlation between
    neighbouring games therefore shows up in the spread of the totals.

    Args:
        R: Reward ratio
        pool_games: Games played in total; each length needs at least two sessions
        session_lengths: Session lengths N to compare
        seed: Experiment seed
        parallelism: Worker processes for playing the pool

    Returns:
        ScalingReport with one point per length and the log-log slopes of
        the spread and of the mean total against N
    """
    if len(session_lengths) < 2:
        raise ParameterError("Scaling needs at least two session lengths")
    short = [n for n in session_lengths if n < 1 or pool_games // n < 2]
    if short:
        raise ParameterError(f"{pool_games} games cannot fill two sessions of length {short[0]}")

    spec = ExperimentSpec(R=R, games=pool_games, seed=seed, parallelism=parallelism)
    alice, bob = spec.strategies()
    summaries = _play_all(spec, alice, bob)
    # unsettled games pay nothing and stay in their block
    gains = np.array([b for _, b, _ in summaries], dtype=float)
    settled = np.array([b for outcome, b, _ in summaries if GameOutcome(outcome).settled], dtype=float)

    points = []
    for n in session_lengths:
        sessions = len(gains) // n
        totals = gains[: sessions * n].reshape(sessions, n).sum(axis=1)
        points.append(
            ScalingPoint(
                games=n,
                sessions=sessions,
                mean_total=float(totals.mean()),
                stddev_total=float(totals.std(ddof=1)),
            )
        )

    log_n = np.log([p.games for p in points])
    stddev_exponent = float(np.polyfit(log_n, np.log([p.stddev_total for p in points]), 1)[0])
    mean_exponent = float(np.polyfit(log_n, np.log([abs(p.mean_total) for p in points]), 1)[0])
    logger.info("Scaling at R=%g: stddev exponent %.3f, mean exponent %.3f", R, stddev_exponent, mean_exponent)
    return ScalingReport(
        R=R,
        pool_games=len(gains),
        single_game_stddev=float(np.std(settled, ddof=1)),
        points=points,
        stddev_exponent=stddev_exponent,
        mean_exponent=mean_exponent,
    )
