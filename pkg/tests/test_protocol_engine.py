"""
Tests for src/protocol_engine.py: settlement, the two session state machines
and single-game runs over the in-process channel.
"""
import json

import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import ParameterError, ProtocolViolationError, UnknownGameError
from src.messages import MessageType, OracleRequestType, Party, message
from src.physics_oracle import DirectOracleClient, PhysicsOracle
from src.protocol_engine import (
    AliceSession,
    BobSession,
    GameOutcome,
    GameParams,
    GameStreams,
    alice_step,
    bob_step,
    build_record,
    run_game,
    settle,
)
from src.strategies import AliceStrategyCfg, BobStrategyCfg

R = 100.0


def _params(index=0, seed=1, reward=R):
    return GameParams(R=reward, seed=seed, index=index)


def _sessions(alice_cfg, bob_cfg, params=None, rng_seed=0):
    params = params or _params()
    oracle = PhysicsOracle()
    oracle.open_game(params.game_id, np.random.default_rng(rng_seed))
    alice = AliceSession(params, alice_cfg, DirectOracleClient(oracle, Party.ALICE))
    bob = BobSession(params, bob_cfg, DirectOracleClient(oracle, Party.BOB), np.random.default_rng(rng_seed + 1))
    return alice, bob


def _play(count, alice_cfg, bob_cfg, seed=3, p_err=0.0):
    oracle = PhysicsOracle()
    return [run_game(_params(i, seed), alice_cfg, bob_cfg, oracle=oracle, p_err=p_err) for i in range(count)]


class TestSettle:
    @pytest.mark.parametrize("outcome, gains", [
        (GameOutcome.BOB_FOUND_PARTICLE, (1.0, -1.0)),
        (GameOutcome.BOB_DETECTED_PREPARATION, (R, -R)),
        (GameOutcome.ALICE_WINS, (-1.0, 1.0)),
        (GameOutcome.BOB_LIE_CAUGHT, (-1.0, 1.0)),
        (GameOutcome.DISPUTED, (0.0, 0.0)),
        (GameOutcome.CANCELED, (0.0, 0.0)),
    ])
    def test_payoffs(self, outcome, gains):
        assert settle(outcome, R) == gains

    @pytest.mark.parametrize("bad", [0.0, -2.0, float("inf"), float("nan")])
    def test_reward_must_be_positive_and_finite(self, bad):
        with pytest.raises(ParameterError):
            settle(GameOutcome.ALICE_WINS, bad)

    def test_settled_flag(self):
        assert GameOutcome.ALICE_WINS.settled
        assert not GameOutcome.DISPUTED.settled
        assert not GameOutcome.CANCELED.settled


class TestGameParams:
    def test_game_id_from_index(self):
        assert _params(index=7).game_id == "g000007"

    def test_bet_is_fixed(self):
        with pytest.raises(ValidationError):
            GameParams(R=R, seed=0, bet=2.0)

    def test_reward_positive(self):
        with pytest.raises(ValidationError):
            GameParams(R=0.0, seed=0)

    @pytest.mark.parametrize("reward", [float("inf"), float("nan")])
    def test_reward_finite(self, reward):
        with pytest.raises(ValidationError):
            GameParams(R=reward, seed=0)

    def test_streams_are_reproducible_and_independent(self):
        a, b = GameStreams.derive(5, 3), GameStreams.derive(5, 3)
        assert a.physics.random() == b.physics.random()
        c = GameStreams.derive(5, 4)
        assert GameStreams.derive(5, 3).physics.random() != c.physics.random()
        d = GameStreams.derive(5, 3)
        assert d.physics.random() != d.bob.random()


class TestRunGame:
    def test_deterministic(self):
        alice, bob = AliceStrategyCfg.biased(0.2), BobStrategyCfg.honest(0.3)
        first = [run_game(_params(i), alice, bob) for i in range(30)]
        second = [run_game(_params(i), alice, bob) for i in range(30)]
        assert first == second

    def test_honest_games_never_detect_or_dispute(self):
        records = _play(300, AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        outcomes = {r.outcome for r in records}
        assert outcomes <= {GameOutcome.BOB_FOUND_PARTICLE, GameOutcome.ALICE_WINS}
        assert outcomes == {GameOutcome.BOB_FOUND_PARTICLE, GameOutcome.ALICE_WINS}

    def test_zero_sum(self):
        records = _play(200, AliceStrategyCfg.biased(0.4), BobStrategyCfg.liar(0.5, 0.3))
        for r in records:
            assert r.bob_gain + r.alice_gain == 0.0
            assert (r.bob_gain, r.alice_gain) == settle(r.outcome, R)

    def test_biased_alice_can_be_detected(self):
        records = _play(300, AliceStrategyCfg.biased(0.5), BobStrategyCfg.honest(1.0))
        outcomes = [r.outcome for r in records]
        # everything is in A, so Bob never finds the particle in B
        assert GameOutcome.BOB_FOUND_PARTICLE not in outcomes
        assert GameOutcome.BOB_DETECTED_PREPARATION in outcomes
        detected = next(r for r in records if r.outcome is GameOutcome.BOB_DETECTED_PREPARATION)
        assert detected.bob_gain == R

    def test_liar_against_equal_superposition_is_disputed(self):
        records = _play(100, AliceStrategyCfg.honest(), BobStrategyCfg.liar(0.0, 1.0))
        # eta = 0: Bob finds the particle in B half of the time, otherwise lies
        assert {r.outcome for r in records} == {GameOutcome.BOB_FOUND_PARTICLE, GameOutcome.DISPUTED}
        disputed = [r for r in records if r.outcome is GameOutcome.DISPUTED]
        assert all(r.flagged and r.bob_gain == 0.0 for r in disputed)

    def test_liar_against_biased_alice_wins(self):
        records = _play(50, AliceStrategyCfg.biased(0.5), BobStrategyCfg.liar(0.2, 1.0))
        assert {r.outcome for r in records} == {GameOutcome.BOB_DETECTED_PREPARATION}

    def test_false_claim(self):
        records = _play(300, AliceStrategyCfg.honest(), BobStrategyCfg.false_claim(0.3, 1.0))
        outcomes = {r.outcome for r in records}
        assert GameOutcome.BOB_LIE_CAUGHT in outcomes
        assert outcomes <= {GameOutcome.BOB_LIE_CAUGHT, GameOutcome.BOB_FOUND_PARTICLE}
        assert all(MessageType.REQUEST_BOX_A not in {t.message.type for t in r.transcript} for r in records)

    def test_never_verify_concedes(self):
        records = _play(100, AliceStrategyCfg.biased(0.5), BobStrategyCfg.never_verify())
        assert {r.outcome for r in records} == {GameOutcome.ALICE_WINS}
        for r in records:
            assert OracleRequestType.PROJECT_VERIFY not in {m.request for m in r.measurements}

    def test_full_error_rate_cancels_every_game(self):
        records = _play(60, AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3), p_err=1.0)
        assert {r.outcome for r in records} == {GameOutcome.CANCELED}
        assert all(r.bob_gain == 0.0 and r.alice_gain == 0.0 for r in records)

    def test_transcript_of_a_found_particle(self):
        records = _play(40, AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.0))
        found = next(r for r in records if r.outcome is GameOutcome.BOB_FOUND_PARTICLE)
        assert [(t.sender, t.message.type) for t in found.transcript] == [
            (Party.ALICE, MessageType.BOX_B_READY),
            (Party.BOB, MessageType.CLAIM_WIN),
            (Party.ALICE, MessageType.OPEN_A_RESULT),
            (Party.ALICE, MessageType.SETTLE),
            (Party.BOB, MessageType.SETTLE),
        ]
        assert [m.request for m in found.measurements] == [OracleRequestType.MEASURE_B, OracleRequestType.OPEN_A]

    def test_record_line_is_json(self):
        record = run_game(_params(), AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        parsed = json.loads(record.to_line())
        assert parsed["outcome"] == record.outcome.value
        assert parsed["params"]["game_id"] == "g000000"


class TestSessions:
    def test_alice_rejects_moves_before_start(self):
        alice, _ = _sessions(AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        with pytest.raises(ProtocolViolationError):
            alice.step(message(MessageType.CLAIM_WIN, alice.game_id))

    def test_bob_rejects_out_of_phase(self):
        _, bob = _sessions(AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        with pytest.raises(ProtocolViolationError):
            bob.step(message(MessageType.BOX_A_READY, bob.game_id))

    def test_unknown_game(self):
        alice, _ = _sessions(AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        alice_step(alice, None)
        with pytest.raises(UnknownGameError):
            alice.step(message(MessageType.CLAIM_WIN, "g999999"))

    def test_start_twice(self):
        alice, _ = _sessions(AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        alice.start()
        with pytest.raises(ProtocolViolationError):
            alice.start()

    def test_detection_without_box_a_is_canceled(self):
        alice, _ = _sessions(AliceStrategyCfg.biased(0.3), BobStrategyCfg.honest(0.3))
        alice_step(alice, None)
        result = alice.step(message(MessageType.VERIFY_RESULT, alice.game_id, detected=True))
        assert alice.outcome is GameOutcome.CANCELED
        assert [m.type for m in result.outgoing] == [MessageType.CANCEL]

    def test_bob_cancels_contradicting_settlement(self):
        alice, bob = _sessions(AliceStrategyCfg.biased(0.5), BobStrategyCfg.honest(0.3))
        (box_b,) = alice_step(alice, None).outgoing
        (request_a,) = bob_step(bob, box_b).outgoing
        assert request_a.type is MessageType.REQUEST_BOX_A
        (box_a,) = alice_step(alice, request_a).outgoing
        bob_step(bob, box_a)
        forged = message(MessageType.SETTLE, bob.game_id, outcome="BobFoundParticle", bob_gain=1.0, alice_gain=-1.0)
        result = bob_step(bob, forged)
        assert bob.outcome is GameOutcome.CANCELED
        assert result.outgoing[0].type is MessageType.CANCEL

    def test_bob_rejects_unknown_outcome(self):
        alice, bob = _sessions(AliceStrategyCfg.biased(0.5), BobStrategyCfg.never_verify())
        (box_b,) = alice_step(alice, None).outgoing
        bob_step(bob, box_b)
        with pytest.raises(ProtocolViolationError):
            bob_step(bob, message(MessageType.SETTLE, bob.game_id, outcome="Draw", bob_gain=0.0, alice_gain=0.0))

    def test_nothing_after_the_end(self):
        alice, _ = _sessions(AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        alice_step(alice, None)
        alice.step(message(MessageType.CANCEL, alice.game_id, reason="bored"))
        assert alice.outcome is GameOutcome.CANCELED
        with pytest.raises(ProtocolViolationError):
            alice.step(message(MessageType.CLAIM_WIN, alice.game_id))

    def test_abort_marks_session(self):
        _, bob = _sessions(AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        bob.step(message(MessageType.ABORT, bob.game_id, reason="session"))
        assert bob.aborted
        assert bob.outcome is GameOutcome.CANCELED

    def test_record_requires_terminal_session(self):
        alice, bob = _sessions(AliceStrategyCfg.honest(), BobStrategyCfg.honest(0.3))
        with pytest.raises(ProtocolViolationError):
            build_record(alice.params, "honest", "eta=0.3", alice, bob)
