"""
Tests for src/harness.py: Monte Carlo agreement with the analytic gains,
reproducibility, error injection and the N-scaling of the total gain.
"""
import logging
import math

import pytest
from pydantic import ValidationError

from src.exceptions import ParameterError
from src.harness import (
    ExperimentSpec,
    analytic_reference,
    error_injection_report,
    play_games,
    predicted_disputed_rate,
    run_experiment,
    scaling_analysis,
    sweep,
)
from src.protocol_engine import GameOutcome, GameParams, run_game
from src.session_monitor import Verdict
from src.strategies import AliceStrategyCfg, BobStrategyCfg
from src.strategy_analysis import GainParams, delta_closed, eta_tilde, gain_bob, worst_case_detection_prob
from tests.conftest import within_sigma


def _stats(games, R=1.0, alice="honest", bob="honest", **kwargs):
    return run_experiment(ExperimentSpec(R=R, games=games, alice=alice, bob=bob, **kwargs))


class TestExperimentSpec:
    def test_rejects_bad_descriptor(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(R=1.0, games=10, bob="gambler")

    def test_rejects_bad_counts(self):
        with pytest.raises(ValidationError):
            ExperimentSpec(R=1.0, games=0)
        with pytest.raises(ValidationError):
            ExperimentSpec(R=1.0, games=10, p_err=1.5)
        with pytest.raises(ValidationError):
            ExperimentSpec(R=math.inf, games=10)

    def test_play_games_matches_run_game(self):
        spec = ExperimentSpec(R=10.0, games=3, alice="eps=0.1", seed=9)
        records = list(play_games(spec))
        alice, bob = spec.strategies()
        assert [r.params.index for r in records] == [0, 1, 2]
        assert records[2] == run_game(GameParams(R=10.0, seed=9, index=2), alice, bob)


class TestAnalyticReference:
    def test_honest_pair(self):
        R = 100.0
        ref = analytic_reference(R, AliceStrategyCfg.honest(), BobStrategyCfg.honest(eta_tilde(R)))
        assert ref == pytest.approx(-eta_tilde(R), abs=1e-12)

    def test_biased_pair(self):
        ref = analytic_reference(10.0, AliceStrategyCfg.biased(0.2), BobStrategyCfg.honest(0.3))
        assert ref == pytest.approx(gain_bob(GainParams(10.0, 0.3, 0.2)), abs=1e-12)

    def test_never_verify_is_fair_against_honest_alice(self):
        assert analytic_reference(5.0, AliceStrategyCfg.honest(), BobStrategyCfg.never_verify()) == pytest.approx(0.0)

    def test_false_claim_gains_nothing_against_honest_alice(self):
        for eta in (0.0, 0.3, 0.9):
            ref = analytic_reference(5.0, AliceStrategyCfg.honest(), BobStrategyCfg.false_claim(eta, 1.0))
            assert ref == pytest.approx(0.0, abs=1e-12)

    def test_liar_disputes(self):
        R = 100.0
        eta = eta_tilde(R)
        rate = predicted_disputed_rate(AliceStrategyCfg.honest(), BobStrategyCfg.liar(eta, 1.0))
        assert rate == pytest.approx(1.0 - (1.0 - eta) / 2.0)
        assert predicted_disputed_rate(AliceStrategyCfg.biased(0.1), BobStrategyCfg.liar(eta, 1.0)) is None

    def test_general_preparation_uses_the_simulator(self):
        ref = analytic_reference(10.0, AliceStrategyCfg.general(4), BobStrategyCfg.honest(eta_tilde(10.0)))
        assert ref >= delta_closed(10.0) - 1e-9


class TestMonteCarloAgreement:
    @pytest.mark.parametrize("R", [1.0, 10.0, 100.0])
    def test_honest_pair(self, R):
        stats = _stats(10000, R=R)
        assert stats.analytic_reference == pytest.approx(-eta_tilde(R))
        assert within_sigma(stats.mean_bob_gain, -eta_tilde(R), stats.stderr_bob_gain)
        assert within_sigma(stats.mean_alice_gain, eta_tilde(R), stats.stderr_bob_gain)
        assert stats.counts[GameOutcome.DISPUTED.value] == 0
        assert stats.counts[GameOutcome.BOB_DETECTED_PREPARATION.value] == 0

    @pytest.mark.parametrize("R", [1.0, 10.0])
    def test_worst_case_alice(self, R):
        stats = _stats(10000, R=R, alice="eps=worst")
        assert within_sigma(stats.mean_bob_gain, delta_closed(R), stats.stderr_bob_gain)

    @pytest.mark.parametrize("eta, eps", [(0.2, -0.3), (0.5, 0.2), (0.9, 0.45), (0.0, 0.1)])
    def test_grid_points(self, eta, eps):
        stats = _stats(5000, R=10.0, alice=f"eps={eps}", bob=f"eta={eta}")
        assert stats.analytic_reference == pytest.approx(gain_bob(GainParams(10.0, eta, eps)))
        assert abs(stats.z_score) <= 4.0

    def test_never_verify_is_fair(self):
        stats = _stats(10000, R=5.0, bob="never-verify")
        assert within_sigma(stats.mean_bob_gain, 0.0, stats.stderr_bob_gain)

    def test_false_claim_against_honest_alice(self):
        stats = _stats(10000, R=5.0, bob="false-claim=1")
        assert within_sigma(stats.mean_bob_gain, 0.0, stats.stderr_bob_gain)
        assert stats.counts[GameOutcome.BOB_LIE_CAUGHT.value] > 0

    def test_single_game_spread(self):
        stats = _stats(10000, R=100.0)
        assert stats.stddev_bob_gain >= 0.99

    @pytest.mark.slow
    @pytest.mark.parametrize("R", [1.0, 10.0, 100.0])
    def test_honest_pair_long_run(self, R):
        stats = _stats(100000, R=R, parallelism=4)
        assert within_sigma(stats.mean_bob_gain, -eta_tilde(R), stats.stderr_bob_gain)

    @pytest.mark.slow
    @pytest.mark.parametrize("R", [1.0, 10.0, 100.0])
    def test_worst_case_alice_long_run(self, R):
        stats = _stats(100000, R=R, alice="eps=worst", parallelism=4)
        assert within_sigma(stats.mean_bob_gain, delta_closed(R), stats.stderr_bob_gain)


class TestSecurityBounds:
    def test_bob_floor_across_alice_strategies(self):
        R = 10.0
        grid = [(alice, "honest") for alice in ("honest", "eps=0.2", "eps=-0.3", "eps=worst", "general-seed=1")]
        for stats in sweep([R], grid, games=4000, seed=17):
            assert stats.mean_bob_gain >= delta_closed(R) - 4 * stats.stderr_bob_gain

    def test_alice_floor_across_bob_strategies(self):
        grid = [("honest", bob) for bob in ("honest", "eta=0.5", "never-verify", "false-claim=1")]
        for stats in sweep([10.0], grid, games=4000, seed=18):
            assert stats.mean_alice_gain >= -4 * stats.stderr_bob_gain

    def test_liar_is_flagged(self):
        stats = _stats(200, R=100.0, bob="liar=1")
        assert stats.verdict.verdict is Verdict.CHEATING_SUSPECTED
        assert stats.disputed_rate > 0.35

    def test_conservation(self):
        stats = _stats(3000, R=7.5, alice="eps=0.5", bob="eta=1")
        assert stats.counts[GameOutcome.BOB_DETECTED_PREPARATION.value] > 0
        assert stats.total_bob_gain == pytest.approx(-stats.total_alice_gain, abs=1e-9)


class TestReproducibility:
    def test_same_seed_same_stats(self):
        assert _stats(500, R=3.0, alice="eps=0.1") == _stats(500, R=3.0, alice="eps=0.1")

    def test_parallelism_does_not_change_results(self):
        serial = _stats(2000, R=3.0, alice="eps=0.1", seed=5)
        parallel = _stats(2000, R=3.0, alice="eps=0.1", seed=5, parallelism=2)
        assert serial.model_dump(exclude={"spec"}) == parallel.model_dump(exclude={"spec"})

    def test_different_seeds_differ(self):
        first = [r.outcome for r in play_games(ExperimentSpec(R=1.0, games=200, seed=1))]
        second = [r.outcome for r in play_games(ExperimentSpec(R=1.0, games=200, seed=2))]
        assert first != second


class TestKeptRecords:
    def test_records_match_replayed_games(self):
        spec = ExperimentSpec(R=10.0, games=40, alice="eps=0.2", seed=4)
        stats = run_experiment(spec, keep_records=True)
        assert stats.records == list(play_games(spec))
        assert stats.model_dump() == run_experiment(spec).model_dump()

    def test_records_survive_parallel_play(self):
        spec = ExperimentSpec(R=10.0, games=40, seed=4, parallelism=2)
        records = run_experiment(spec, keep_records=True).records
        assert [r.params.index for r in records] == list(range(40))
        assert records == list(play_games(spec))

    def test_not_kept_by_default(self):
        assert run_experiment(ExperimentSpec(R=10.0, games=5)).records is None


class TestSweep:
    def test_row_order(self):
        grid = [("honest", "honest"), ("eps=0.3", "never-verify")]
        results = sweep([1.0, 10.0], grid, games=200)
        assert [(s.spec.R, s.spec.alice, s.spec.bob) for s in results] == [
            (1.0, "honest", "honest"),
            (1.0, "eps=0.3", "never-verify"),
            (10.0, "honest", "honest"),
            (10.0, "eps=0.3", "never-verify"),
        ]

    def test_empty_grid(self):
        with pytest.raises(ParameterError):
            sweep([1.0], [], games=10)
        with pytest.raises(ParameterError):
            sweep([], [("honest", "honest")], games=10)


class TestErrorInjection:
    def test_canceled_rate_matches_error_rate(self):
        p = 0.01
        stats = error_injection_report(ExperimentSpec(R=100.0, games=10000, p_err=p, seed=11))
        sigma = math.sqrt(p * (1 - p) / stats.games)
        assert abs(stats.canceled_rate - p) <= 4 * sigma
        assert stats.verdict.verdict is Verdict.CLEAN

    def test_liar_without_errors(self):
        stats = error_injection_report(ExperimentSpec(R=100.0, games=300, bob="liar=1", p_err=0.0))
        assert stats.verdict.verdict is Verdict.CHEATING_SUSPECTED

    def test_error_rate_above_detection_floor_warns(self, caplog):
        assert 0.01 >= worst_case_detection_prob(100.0)
        with caplog.at_level(logging.WARNING, logger="src.harness"):
            error_injection_report(ExperimentSpec(R=100.0, games=50, p_err=0.01))
        assert any("drown" in r.getMessage() for r in caplog.records)

    def test_rejects_certain_corruption(self):
        with pytest.raises(ParameterError):
            error_injection_report(ExperimentSpec(R=1.0, games=10, p_err=1.0))


class TestScaling:
    def test_stddev_grows_as_square_root(self):
        report = scaling_analysis(1.0, pool_games=20000, session_lengths=(5, 25, 125))
        assert [(p.games, p.sessions) for p in report.points] == [(5, 4000), (25, 800), (125, 160)]
        assert 0.43 <= report.stddev_exponent <= 0.57
        assert report.mean_exponent == pytest.approx(1.0, abs=1e-9)
        assert report.single_game_stddev == pytest.approx(math.sqrt(1 - eta_tilde(1.0) ** 2), abs=0.03)

    def test_sessions_are_disjoint_blocks_of_played_games(self):
        spec = ExperimentSpec(R=1.0, games=60)
        gains = [r.bob_gain for r in play_games(spec)]
        report = scaling_analysis(1.0, pool_games=60, session_lengths=(10, 30))
        totals = [math.fsum(gains[i:i + 30]) for i in (0, 30)]
        assert report.points[1].sessions == 2
        assert report.points[1].mean_total == pytest.approx(math.fsum(totals) / 2)
        assert report.points[1].stddev_total == pytest.approx(abs(totals[0] - totals[1]) / math.sqrt(2))

    @pytest.mark.slow
    def test_stddev_exponent_over_long_sessions(self):
        report = scaling_analysis(1.0, pool_games=1_000_000, parallelism=4)
        assert [p.games for p in report.points] == [100, 1000, 10000]
        assert 0.45 <= report.stddev_exponent <= 0.55

    def test_needs_two_lengths(self):
        with pytest.raises(ParameterError):
            scaling_analysis(1.0, pool_games=100, session_lengths=(10,))

    def test_needs_two_sessions_per_length(self):
        with pytest.raises(ParameterError):
            scaling_analysis(1.0, pool_games=100, session_lengths=(10, 60))
