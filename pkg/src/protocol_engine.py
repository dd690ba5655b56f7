"""
Protocol Engine Module
Alice and Bob session state machines. Each session exchanges classical
WireMessages with the other party and drives quantum operations through the
physics oracle; Alice settles every game and Bob confirms or cancels.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.channels import Endpoint, FaultInjector, FaultyEndpoint, channel_pair
from src.exceptions import ParameterError, ProtocolViolationError, UnknownGameError
from src.messages import (
    MessageType,
    OracleRequest,
    OracleRequestType,
    Party,
    WireMessage,
    message,
    oracle_request,
)
from src.physics_oracle import DirectOracleClient, OracleClient, PhysicsOracle, preparation_to_payload
from src.strategies import AliceStrategyCfg, BobStrategyCfg, BobVariant

logger = logging.getLogger(__name__)

BET = 1.0

MEASUREMENT_REQUESTS = (
    OracleRequestType.MEASURE_B,
    OracleRequestType.OPEN_A,
    OracleRequestType.PROJECT_VERIFY,
)


class GameOutcome(str, enum.Enum):
    BOB_FOUND_PARTICLE = "BobFoundParticle"
    BOB_DETECTED_PREPARATION = "BobDetectedPreparation"
    ALICE_WINS = "AliceWins"
    BOB_LIE_CAUGHT = "BobLieCaught"
    DISPUTED = "Disputed"
    CANCELED = "Canceled"

    @property
    def settled(self) -> bool:
        return self not in (GameOutcome.DISPUTED, GameOutcome.CANCELED)


def settle(outcome: GameOutcome, R: float) -> Tuple[float, float]:
    """
    Payoffs of a terminal outcome

    Args:
        outcome: Terminal outcome of the game
        R: Reward ratio paid on a detected preparation

    Returns:
        (bob_gain, alice_gain) in coins; they always sum to zero
    """
    if not (math.isfinite(R) and R > 0):
        raise ParameterError(f"Reward ratio R must be finite and positive, got {R}")
    if outcome is GameOutcome.BOB_FOUND_PARTICLE:
        return BET, -BET
    if outcome is GameOutcome.BOB_DETECTED_PREPARATION:
        return float(R), -float(R)
    if outcome in (GameOutcome.ALICE_WINS, GameOutcome.BOB_LIE_CAUGHT):
        return -BET, BET
    return 0.0, 0.0


def game_id_for(index: int) -> str:
    return f"g{index:06d}"


class GameParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    R: float = Field(gt=0, allow_inf_nan=False)
    bet: float = BET
    seed: int = Field(ge=0)
    index: int = Field(default=0, ge=0)
    game_id: str = ""

    @model_validator(mode="before")
    @classmethod
    def _default_game_id(cls, data: Any) -> Any:
        if isinstance(data, dict) and not data.get("game_id"):
            data = dict(data)
            data["game_id"] = game_id_for(int(data.get("index", 0)))
        return data

    @model_validator(mode="after")
    def _fixed_bet(self) -> "GameParams":
        if self.bet != BET:
            raise ValueError(f"The bet is fixed at {BET} coin")
        return self


@dataclass(frozen=True)
class GameStreams:
    """Independent per-game random streams derived from (seed, game index)"""

    physics: np.random.Generator
    bob: np.random.Generator
    channel: np.random.Generator

    @classmethod
    def derive(cls, seed: int, index: int) -> "GameStreams":
        children = np.random.SeedSequence(seed, spawn_key=(index,)).spawn(3)
        return cls(*(np.random.default_rng(child) for child in children))


class TranscriptEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    sender: Party
    message: WireMessage


class MeasurementRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    party: Party
    request: OracleRequestType
    found: bool
    turn: int


class GameRecord(BaseModel):
    """Immutable account of one game; ``to_line`` gives its JSONL form"""

    model_config = ConfigDict(frozen=True)

    params: GameParams
    alice: str
    bob: str
    transcript: List[TranscriptEntry]
    measurements: List[MeasurementRecord]
    outcome: GameOutcome
    bob_gain: float
    alice_gain: float
    flagged: bool = False
    note: str = ""

    def to_line(self) -> str:
        return self.model_dump_json()


@dataclass(frozen=True)
class StepResult:
    outgoing: List[WireMessage] = field(default_factory=list)
    oracle_requests: List[OracleRequest] = field(default_factory=list)


class _Session:
    party: Party

    def __init__(self, params: GameParams, oracle: OracleClient):
        self.params = params
        self.oracle = oracle
        self.transcript: List[TranscriptEntry] = []
        self.measurements: List[MeasurementRecord] = []
        self.outcome: Optional[GameOutcome] = None
        self.bob_gain = 0.0
        self.alice_gain = 0.0
        self.flagged = False
        self.aborted = False
        self.note = ""
        self._issued: List[OracleRequest] = []

    @property
    def game_id(self) -> str:
        return self.params.game_id

    @property
    def finished(self) -> bool:
        return self.outcome is not None

    @property
    def other(self) -> Party:
        return Party.BOB if self.party is Party.ALICE else Party.ALICE

    def _send(self, out: List[WireMessage], kind: MessageType, **payload: Any) -> None:
        msg = message(kind, self.game_id, **payload)
        self.transcript.append(TranscriptEntry(sender=self.party, message=msg))
        out.append(msg)

    def _receive(self, msg: WireMessage) -> None:
        if msg.game_id != self.game_id:
            raise UnknownGameError(f"Message for game {msg.game_id!r} reached session {self.game_id!r}")
        if self.finished:
            raise ProtocolViolationError(f"{msg.type.value} arrived after game {self.game_id} ended")
        self.transcript.append(TranscriptEntry(sender=self.other, message=msg))

    def _ask(self, kind: OracleRequestType, **payload: Any) -> bool:
        request = oracle_request(kind, self.game_id, **payload)
        reply = self.oracle.request(request)
        self._issued.append(request)
        found = reply.payload["found"]
        if kind in MEASUREMENT_REQUESTS:
            self.measurements.append(
                MeasurementRecord(party=self.party, request=kind, found=found, turn=len(self.transcript))
            )
        return found

    def _result(self, out: List[WireMessage]) -> StepResult:
        issued, self._issued = self._issued, []
        return StepResult(outgoing=out, oracle_requests=issued)

    def _finish(self, outcome: GameOutcome, note: str = "") -> None:
        self.outcome = outcome
        self.bob_gain, self.alice_gain = settle(outcome, self.params.R)
        self.flagged = outcome is GameOutcome.DISPUTED
        self.note = note
        if outcome is GameOutcome.CANCELED:
            logger.warning("Game %s canceled: %s", self.game_id, note)
        else:
            logger.debug("Game %s ended for %s: %s", self.game_id, self.party.value, outcome.value)

    def _terminal_message(self, msg: WireMessage) -> bool:
        """Handle CANCEL and ABORT, which are legal in any phase"""
        if msg.type is MessageType.CANCEL:
            self._finish(GameOutcome.CANCELED, f"{self.other.value} canceled: {msg.payload['reason']}")
            return True
        if msg.type is MessageType.ABORT:
            self.aborted = True
            self._finish(GameOutcome.CANCELED, f"{self.other.value} aborted: {msg.payload['reason']}")
            return True
        return False

    def cancel(self, reason: str) -> None:
        """Mark the game Canceled after a channel failure or local error"""
        if not self.finished:
            self._finish(GameOutcome.CANCELED, reason)


class AlicePhase(str, enum.Enum):
    IDLE = "idle"
    AWAIT_MOVE = "await_move"
    AWAIT_VERIFY = "await_verify"
    AWAIT_CONFIRM = "await_confirm"


class AliceSession(_Session):
    """Alice's side of one game"""

    party = Party.ALICE

    def __init__(self, params: GameParams, cfg: AliceStrategyCfg, oracle: OracleClient):
        super().__init__(params, oracle)
        self.cfg = cfg
        self.phase = AlicePhase.IDLE
        self._proposed: Optional[GameOutcome] = None

    def start(self) -> StepResult:
        """
        Prepare the particle and hand box B to Bob

        Returns:
            The BOX_B_READY message and the PREPARE oracle request
        """
        if self.phase is not AlicePhase.IDLE:
            raise ProtocolViolationError(f"Game {self.game_id} already started")
        out: List[WireMessage] = []
        self._ask(OracleRequestType.PREPARE, preparation=preparation_to_payload(self.cfg.preparation()))
        self._send(out, MessageType.BOX_B_READY)
        self.phase = AlicePhase.AWAIT_MOVE
        return self._result(out)

    def _propose(self, out: List[WireMessage], outcome: GameOutcome) -> None:
        bob_gain, alice_gain = settle(outcome, self.params.R)
        self._send(out, MessageType.SETTLE, outcome=outcome.value, bob_gain=bob_gain, alice_gain=alice_gain)
        self._proposed = outcome
        self.phase = AlicePhase.AWAIT_CONFIRM

    def step(self, msg: WireMessage) -> StepResult:
        """
        Handle one message from Bob

        Args:
            msg: Next message on the channel; its game id and order are checked here

        Returns:
            Messages to send back and the oracle requests made on the way
        """
        self._receive(msg)
        out: List[WireMessage] = []
        if self._terminal_message(msg):
            return self._result(out)

        kind = msg.type
        if self.phase is AlicePhase.AWAIT_MOVE and kind is MessageType.CLAIM_WIN:
            found_in_a = self._ask(OracleRequestType.OPEN_A)
            self._send(out, MessageType.OPEN_A_RESULT, found_in_a=found_in_a)
            self._propose(out, GameOutcome.BOB_LIE_CAUGHT if found_in_a else GameOutcome.BOB_FOUND_PARTICLE)

        elif self.phase is AlicePhase.AWAIT_MOVE and kind is MessageType.REQUEST_BOX_A:
            self._ask(OracleRequestType.RELEASE_A)
            self._send(out, MessageType.BOX_A_READY)
            self.phase = AlicePhase.AWAIT_VERIFY

        elif self.phase in (AlicePhase.AWAIT_MOVE, AlicePhase.AWAIT_VERIFY) and kind is MessageType.VERIFY_RESULT:
            if not msg.payload["detected"]:
                self._propose(out, GameOutcome.ALICE_WINS)
            elif self.phase is AlicePhase.AWAIT_MOVE:
                reason = "detection claimed without box A"
                self._send(out, MessageType.CANCEL, reason=reason)
                self._finish(GameOutcome.CANCELED, reason)
            elif self.cfg.is_reference:
                logger.warning("Game %s: detection claimed against the equal superposition", self.game_id)
                self._propose(out, GameOutcome.DISPUTED)
            else:
                self._propose(out, GameOutcome.BOB_DETECTED_PREPARATION)

        elif self.phase is AlicePhase.AWAIT_CONFIRM and kind is MessageType.SETTLE:
            bob_gain, alice_gain = settle(self._proposed, self.params.R)
            confirmed = (
                msg.payload["outcome"] == self._proposed.value
                and msg.payload["bob_gain"] == bob_gain
                and msg.payload["alice_gain"] == alice_gain
            )
            if confirmed:
                self._finish(self._proposed)
            else:
                self._finish(GameOutcome.CANCELED, "settlement confirmation does not match")

        else:
            raise ProtocolViolationError(
                f"Alice cannot accept {kind.value} in phase {self.phase.value} of game {self.game_id}"
            )
        return self._result(out)


class BobPhase(str, enum.Enum):
    AWAIT_BOX_B = "await_box_b"
    AWAIT_OPEN_RESULT = "await_open_result"
    AWAIT_BOX_A = "await_box_a"
    AWAIT_SETTLE = "await_settle"


class BobSession(_Session):
    """Bob's side of one game.

    Bob tracks the outcomes consistent with what he saw and sent, and cancels
    any settlement outside that set.
    """

    party = Party.BOB

    def __init__(self, params: GameParams, cfg: BobStrategyCfg, oracle: OracleClient, rng: np.random.Generator):
        super().__init__(params, oracle)
        self.cfg = cfg
        self.rng = rng
        self.phase = BobPhase.AWAIT_BOX_B
        self.found_in_b: Optional[bool] = None
        self.lied = False
        self._acceptable: FrozenSet[GameOutcome] = frozenset()

    def _report(self, out: List[WireMessage], detected: bool) -> None:
        self._send(out, MessageType.VERIFY_RESULT, detected=detected)
        if detected:
            self._acceptable = frozenset({GameOutcome.BOB_DETECTED_PREPARATION, GameOutcome.DISPUTED})
        else:
            self._acceptable = frozenset({GameOutcome.ALICE_WINS})
        self.phase = BobPhase.AWAIT_SETTLE

    def _on_box_b(self, out: List[WireMessage]) -> None:
        self._ask(OracleRequestType.SPLIT, eta=self.cfg.eta)
        self.found_in_b = self._ask(OracleRequestType.MEASURE_B)
        if self.found_in_b:
            self._send(out, MessageType.CLAIM_WIN)
            self.phase = BobPhase.AWAIT_OPEN_RESULT
        elif self.cfg.variant is BobVariant.FALSE_CLAIM and self.rng.random() < self.cfg.claim_prob:
            self.lied = True
            self._send(out, MessageType.CLAIM_WIN)
            self.phase = BobPhase.AWAIT_OPEN_RESULT
        elif self.cfg.variant is BobVariant.NEVER_VERIFY:
            self._report(out, detected=False)
        else:
            self._send(out, MessageType.REQUEST_BOX_A)
            self.phase = BobPhase.AWAIT_BOX_A

    def _on_box_a(self, out: List[WireMessage]) -> None:
        passed = self._ask(OracleRequestType.PROJECT_VERIFY, eta=self.cfg.eta)
        detected = not passed
        if self.cfg.variant is BobVariant.LIAR and self.rng.random() < self.cfg.lie_prob:
            self.lied = self.lied or not detected
            detected = True
        self._report(out, detected)

    def _on_open_result(self, found_in_a: bool) -> None:
        if self.found_in_b and found_in_a:
            # the particle cannot be in both boxes
            self._acceptable = frozenset()
        elif found_in_a:
            self._acceptable = frozenset({GameOutcome.BOB_LIE_CAUGHT})
        else:
            self._acceptable = frozenset({GameOutcome.BOB_FOUND_PARTICLE})
        self.phase = BobPhase.AWAIT_SETTLE

    def _on_settle(self, out: List[WireMessage], payload: Dict[str, Any]) -> None:
        try:
            outcome = GameOutcome(payload["outcome"])
        except ValueError:
            raise ProtocolViolationError(f"Unknown outcome {payload['outcome']!r} in SETTLE") from None
        bob_gain, alice_gain = settle(outcome, self.params.R)
        agreed = (
            outcome in self._acceptable
            and payload["bob_gain"] == bob_gain
            and payload["alice_gain"] == alice_gain
        )
        if agreed:
            self._send(out, MessageType.SETTLE, outcome=outcome.value, bob_gain=bob_gain, alice_gain=alice_gain)
            self._finish(outcome)
        else:
            reason = f"settlement {outcome.value} contradicts Bob's results"
            self._send(out, MessageType.CANCEL, reason=reason)
            self._finish(GameOutcome.CANCELED, reason)

    def step(self, msg: WireMessage) -> StepResult:
        """Handle one message from Alice; may split, measure and verify through the oracle"""
        self._receive(msg)
        out: List[WireMessage] = []
        if self._terminal_message(msg):
            return self._result(out)

        kind = msg.type
        if self.phase is BobPhase.AWAIT_BOX_B and kind is MessageType.BOX_B_READY:
            self._on_box_b(out)
        elif self.phase is BobPhase.AWAIT_OPEN_RESULT and kind is MessageType.OPEN_A_RESULT:
            self._on_open_result(msg.payload["found_in_a"])
        elif self.phase is BobPhase.AWAIT_BOX_A and kind is MessageType.BOX_A_READY:
            self._on_box_a(out)
        elif self.phase is BobPhase.AWAIT_SETTLE and kind is MessageType.SETTLE:
            self._on_settle(out, msg.payload)
        else:
            raise ProtocolViolationError(
                f"Bob cannot accept {kind.value} in phase {self.phase.value} of game {self.game_id}"
            )
        return self._result(out)


def alice_step(session: AliceSession, incoming: Optional[WireMessage]) -> StepResult:
    """Advance Alice; ``None`` is the start signal"""
    if incoming is None:
        return session.start()
    return session.step(incoming)


def bob_step(session: BobSession, incoming: WireMessage) -> StepResult:
    """Advance Bob by one incoming message"""
    return session.step(incoming)


def build_record(
    params: GameParams,
    alice: str,
    bob: str,
    alice_session: Optional[AliceSession] = None,
    bob_session: Optional[BobSession] = None,
) -> GameRecord:
    """
    Assemble the record of a finished game

    Args:
        params: Parameters the game was played with
        alice: Alice's strategy descriptor
        bob: Bob's strategy descriptor
        alice_session: Alice's finished session, if this side holds it
        bob_session: Bob's finished session, if this side holds it

    Returns:
        GameRecord built from Alice's transcript and outcome when both sessions are given

    Raises:
        ProtocolViolationError: If the game has not reached a terminal outcome
    """
    primary = alice_session or bob_session
    if primary is None or not primary.finished:
        raise ProtocolViolationError(f"Game {params.game_id} has not reached a terminal outcome")
    measurements = [m for s in (alice_session, bob_session) if s is not None for m in s.measurements]
    measurements.sort(key=lambda m: m.turn)
    return GameRecord(
        params=params,
        alice=alice,
        bob=bob,
        transcript=list(primary.transcript),
        measurements=measurements,
        outcome=primary.outcome,
        bob_gain=primary.bob_gain,
        alice_gain=primary.alice_gain,
        flagged=primary.flagged,
        note=primary.note,
    )


def _deliver(endpoint: Endpoint, outgoing: List[WireMessage]) -> None:
    for msg in outgoing:
        endpoint.send(msg)


def run_game(
    params: GameParams,
    alice_cfg: AliceStrategyCfg,
    bob_cfg: BobStrategyCfg,
    oracle: Optional[PhysicsOracle] = None,
    streams: Optional[GameStreams] = None,
    p_err: float = 0.0,
) -> GameRecord:
    """Play one game over an in-process channel and return its record.

    Args:
        params: Game parameters; the random streams derive from seed and index
        alice_cfg: Alice's strategy
        bob_cfg: Bob's strategy
        oracle: Shared physics oracle (a private one is created if omitted)
        streams: Explicit random streams, overriding the derived ones
        p_err: Probability that the channel corrupts this game's result

    Returns:
        The terminal GameRecord
    """
    oracle = oracle or PhysicsOracle()
    streams = streams or GameStreams.derive(params.seed, params.index)
    injector = FaultInjector(p_err)
    injector.begin_game(params.game_id, streams.channel)

    alice_end, bob_end = channel_pair()
    alice_ep = FaultyEndpoint(alice_end, injector)
    oracle.open_game(params.game_id, streams.physics)
    try:
        alice = AliceSession(params, alice_cfg, DirectOracleClient(oracle, Party.ALICE))
        bob = BobSession(params, bob_cfg, DirectOracleClient(oracle, Party.BOB), streams.bob)
        _deliver(alice_ep, alice_step(alice, None).outgoing)
        while not (alice.finished and bob.finished):
            moved = False
            for session, endpoint in ((bob, bob_end), (alice, alice_ep)):
                while endpoint.pending():
                    _deliver(endpoint, session.step(endpoint.recv(0)).outgoing)
                    moved = True
            if not moved:
                raise ProtocolViolationError(f"Game {params.game_id} stalled")
    finally:
        oracle.close_game(params.game_id)
        injector.end_game(params.game_id)

    return build_record(params, alice_cfg.descriptor, bob_cfg.descriptor, alice, bob)
