"""
Network Play Module
Runs a gambling session over the socket transport. The casino (Alice) hosts
the physics oracle and answers Bob's oracle requests on the same connection.
Both sides evaluate the session monitor after every game and stop once
cheating is suspected.
"""
from __future__ import annotations

import logging
import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict

import config
from src.channels import Endpoint, FaultInjector, FaultyEndpoint, Listener, connect
from src.exceptions import (
    ChannelClosedError,
    ChannelTimeoutError,
    DecodeError,
    GamblingError,
    ProtocolViolationError,
)
from src.messages import MessageType, OracleRequest, Party, WireMessage, message
from src.physics_oracle import DirectOracleClient, PhysicsOracle, RemoteOracleClient, oracle_endpoint
from src.protocol_engine import (
    AliceSession,
    BobSession,
    GameOutcome,
    GameParams,
    GameRecord,
    GameStreams,
    build_record,
    game_id_for,
)
from src.session_monitor import SessionVerdict, Verdict, session_monitor
from src.strategies import AliceStrategyCfg, BobStrategyCfg

logger = logging.getLogger(__name__)

SESSION_ID = "session"
REMOTE = "remote"

_CHANNEL_ERRORS = (ChannelClosedError, ChannelTimeoutError, DecodeError)


class SessionSummary(BaseModel):
    """Settlement totals printed by both sides at the end of a session"""

    model_config = ConfigDict(frozen=True)

    R: float
    games_requested: int
    games_played: int
    counts: dict
    total_bob_gain: float
    total_alice_gain: float
    verdict: SessionVerdict
    stopped_early: bool

    @classmethod
    def from_records(
        cls, R: float, games_requested: int, records: List[GameRecord], expected_error_rate: float
    ) -> "SessionSummary":
        counts = {outcome.value: 0 for outcome in GameOutcome}
        for record in records:
            counts[record.outcome.value] += 1
        verdict = session_monitor(records, expected_error_rate)
        return cls(
            R=R,
            games_requested=games_requested,
            games_played=len(records),
            counts=counts,
            total_bob_gain=math.fsum(r.bob_gain for r in records),
            total_alice_gain=math.fsum(r.alice_gain for r in records),
            verdict=verdict,
            stopped_early=len(records) < games_requested,
        )

    def lines(self) -> List[str]:
        played = ", ".join(f"{name}={count}" for name, count in self.counts.items() if count)
        return [
            f"Games played: {self.games_played}/{self.games_requested} at R={self.R:g}",
            f"Outcomes: {played or 'none'}",
            f"Total Bob gain: {self.total_bob_gain:+.6f}",
            f"Total Alice gain: {self.total_alice_gain:+.6f}",
            f"Verdict: {self.verdict.verdict.value}",
        ]


def _expect_wire(frame) -> WireMessage:
    if not isinstance(frame, WireMessage):
        raise ProtocolViolationError(f"Expected a game message, got {frame.type.value}")
    return frame


def _send_abort(endpoint: Endpoint, game_id: str, reason: str) -> None:
    try:
        endpoint.send(message(MessageType.ABORT, game_id, reason=reason))
    except ChannelClosedError:
        pass


def play_alice_game(
    endpoint: Endpoint,
    params: GameParams,
    cfg: AliceStrategyCfg,
    oracle: PhysicsOracle,
    streams: GameStreams,
    timeout: Optional[float] = None,
) -> AliceSession:
    """Run Alice's side of one game, serving Bob's oracle requests inline"""
    oracle.open_game(params.game_id, streams.physics)
    alice = AliceSession(params, cfg, DirectOracleClient(oracle, Party.ALICE))
    serve_bob = oracle_endpoint(oracle, Party.BOB)
    try:
        for msg in alice.start().outgoing:
            endpoint.send(msg)
        while not alice.finished:
            frame = endpoint.recv(timeout)
            if isinstance(frame, OracleRequest):
                endpoint.send(serve_bob(frame))
                continue
            for msg in alice.step(_expect_wire(frame)).outgoing:
                endpoint.send(msg)
    except _CHANNEL_ERRORS as exc:
        alice.cancel(f"channel failure: {exc}")
    except ProtocolViolationError as exc:
        _send_abort(endpoint, params.game_id, str(exc))
        alice.aborted = True
        alice.cancel(f"protocol violation: {exc}")
    finally:
        oracle.close_game(params.game_id)
    return alice


def play_bob_game(
    endpoint: Endpoint,
    params: GameParams,
    cfg: BobStrategyCfg,
    rng,
    first: WireMessage,
    timeout: Optional[float] = None,
) -> BobSession:
    """Run Bob's side of one game starting from Alice's first message"""
    bob = BobSession(params, cfg, RemoteOracleClient(endpoint, timeout), rng)
    frame = first
    try:
        while True:
            for msg in bob.step(_expect_wire(frame)).outgoing:
                endpoint.send(msg)
            if bob.finished:
                break
            frame = endpoint.recv(timeout)
    except _CHANNEL_ERRORS as exc:
        bob.cancel(f"channel failure: {exc}")
    except ProtocolViolationError as exc:
        _send_abort(endpoint, params.game_id, str(exc))
        bob.aborted = True
        bob.cancel(f"protocol violation: {exc}")
    return bob


class CasinoServer:
    """Alice's side: accepts one player and plays the games requested in HELLO"""

    def __init__(
        self,
        alice: AliceStrategyCfg,
        seed: int = config.DEFAULT_SEED,
        p_err: float = 0.0,
        timeout: Optional[float] = None,
    ):
        self.alice = alice
        self.seed = seed
        self.p_err = p_err
        self.timeout = config.RECV_TIMEOUT if timeout is None else timeout
        self.oracle = PhysicsOracle()
        self.records: List[GameRecord] = []

    def _handshake(self, endpoint: Endpoint) -> WireMessage:
        hello = _expect_wire(endpoint.recv(self.timeout))
        if hello.type is not MessageType.HELLO:
            raise ProtocolViolationError(f"Session must open with HELLO, got {hello.type.value}")
        R, games = hello.payload["R"], hello.payload["games"]
        if not (math.isfinite(R) and R > 0) or games < 1:
            raise ProtocolViolationError("HELLO needs a finite R > 0 and at least one game")
        endpoint.send(message(MessageType.ACCEPT, SESSION_ID))
        return hello

    def play(self, endpoint: Endpoint) -> SessionSummary:
        """
        Play a full session on an accepted connection

        Args:
            endpoint: Connected endpoint; the player speaks first with HELLO

        Returns:
            SessionSummary of the games Alice played, also kept in ``records``

        Raises:
            ProtocolViolationError: If the handshake is malformed; ABORT is sent first
        """
        try:
            hello = self._handshake(endpoint)
        except (ProtocolViolationError, *_CHANNEL_ERRORS) as exc:
            logger.error("Handshake failed: %s", exc)
            _send_abort(endpoint, SESSION_ID, str(exc))
            raise

        R, games = hello.payload["R"], hello.payload["games"]
        logger.info("Player requested %d games at R=%g", games, R)
        injector = FaultInjector(self.p_err)
        faulty = FaultyEndpoint(endpoint, injector)

        for index in range(games):
            params = GameParams(R=R, seed=self.seed, index=index)
            streams = GameStreams.derive(self.seed, index)
            injector.begin_game(params.game_id, streams.channel)
            alice = play_alice_game(faulty, params, self.alice, self.oracle, streams, self.timeout)
            injector.end_game(params.game_id)
            self.records.append(build_record(params, self.alice.descriptor, REMOTE, alice_session=alice))

            if alice.aborted or self.records[-1].note.startswith("channel failure"):
                break
            verdict = session_monitor(self.records, self.p_err)
            if verdict.verdict is Verdict.CHEATING_SUSPECTED:
                _send_abort(endpoint, SESSION_ID, "cheating suspected")
                break

        return SessionSummary.from_records(R, games, self.records, self.p_err)

    def serve(self, listener: Listener, accept_timeout: Optional[float] = None) -> SessionSummary:
        """Accept one player and play the session with them"""
        with listener.accept(accept_timeout) as endpoint:
            return self.play(endpoint)


class PlayerClient:
    """Bob's side: opens a session and plays each game Alice starts"""

    def __init__(
        self,
        bob: BobStrategyCfg,
        R: float,
        games: int,
        seed: int = config.DEFAULT_SEED,
        expected_error_rate: float = 0.0,
        timeout: Optional[float] = None,
    ):
        if not (math.isfinite(R) and R > 0) or games < 1:
            raise GamblingError("A session needs a finite R > 0 and at least one game")
        self.bob = bob
        self.R = R
        self.games = games
        self.seed = seed
        self.expected_error_rate = expected_error_rate
        self.timeout = config.RECV_TIMEOUT if timeout is None else timeout
        self.records: List[GameRecord] = []

    def play(self, endpoint: Endpoint) -> SessionSummary:
        """
        Open a session and play every game the casino starts

        Args:
            endpoint: Connected endpoint to the casino

        Returns:
            SessionSummary of the games played, also kept in ``records``

        Raises:
            ProtocolViolationError: If the casino refuses the session or skips a game
        """
        endpoint.send(message(MessageType.HELLO, SESSION_ID, R=self.R, games=self.games))
        reply = _expect_wire(endpoint.recv(self.timeout))
        if reply.type is not MessageType.ACCEPT:
            raise ProtocolViolationError(f"Casino refused the session: {reply.payload}")

        for index in range(self.games):
            try:
                first = _expect_wire(endpoint.recv(self.timeout))
            except _CHANNEL_ERRORS as exc:
                logger.warning("Session ended before game %d: %s", index, exc)
                break
            if first.type is MessageType.ABORT:
                logger.warning("Casino stopped the session: %s", first.payload["reason"])
                break
            params = GameParams(R=self.R, seed=self.seed, index=index, game_id=first.game_id)
            if params.game_id != game_id_for(index):
                raise ProtocolViolationError(f"Expected game {game_id_for(index)}, got {params.game_id}")
            bob = play_bob_game(endpoint, params, self.bob, GameStreams.derive(self.seed, index).bob, first, self.timeout)
            self.records.append(build_record(params, REMOTE, self.bob.descriptor, bob_session=bob))
            if bob.aborted or self.records[-1].note.startswith("channel failure"):
                break

        return SessionSummary.from_records(self.R, self.games, self.records, self.expected_error_rate)

    def run(self, address, connect_timeout: Optional[float] = None) -> SessionSummary:
        """Connect to ``address`` and play the session"""
        with connect(address, connect_timeout) as endpoint:
            return self.play(endpoint)
