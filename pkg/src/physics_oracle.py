"""
Physics Oracle Module
Trusted referee that holds each game's joint quantum state. Parties never see
amplitudes: "sending box B" is modeled as granting Bob the right to request
operations on mode B, and releasing box A grants him the verification
projection. Replies carry a single boolean.

A classical simulation cannot offer the unconditional security of the
physical protocol; this component demonstrates protocol logic and statistics
under a referee both parties trust.
"""
from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Protocol

import numpy as np

from src.channels import Endpoint
from src.exceptions import (
    InvalidPreparationError,
    ProtocolViolationError,
    UnknownGameError,
)
from src.messages import (
    OracleReply,
    OracleRequest,
    OracleRequestType,
    Party,
)
from src.quantum_core import (
    MODE_A,
    MODE_B,
    EpsilonPreparation,
    GeneralPreparation,
    ModeLabel,
    Preparation,
    QuantumState,
    measure_mode,
    prepare,
    split_b,
    verify_preparation,
)

logger = logging.getLogger(__name__)


class GamePhase(str, enum.Enum):
    OPEN = "open"
    PREPARED = "prepared"
    SPLIT = "split"
    MEASURED_B = "measured_b"
    RELEASED_A = "released_a"
    FINISHED = "finished"


# who may ask for what
ENTITLEMENTS: Dict[OracleRequestType, Party] = {
    OracleRequestType.PREPARE: Party.ALICE,
    OracleRequestType.OPEN_A: Party.ALICE,
    OracleRequestType.RELEASE_A: Party.ALICE,
    OracleRequestType.SPLIT: Party.BOB,
    OracleRequestType.MEASURE_B: Party.BOB,
    OracleRequestType.PROJECT_VERIFY: Party.BOB,
}

# phase a request requires -> phase it leads to
TRANSITIONS: Dict[OracleRequestType, tuple] = {
    OracleRequestType.PREPARE: ((GamePhase.OPEN,), GamePhase.PREPARED),
    OracleRequestType.SPLIT: ((GamePhase.PREPARED,), GamePhase.SPLIT),
    OracleRequestType.MEASURE_B: ((GamePhase.SPLIT,), GamePhase.MEASURED_B),
    OracleRequestType.OPEN_A: ((GamePhase.MEASURED_B,), GamePhase.FINISHED),
    OracleRequestType.RELEASE_A: ((GamePhase.MEASURED_B,), GamePhase.RELEASED_A),
    OracleRequestType.PROJECT_VERIFY: ((GamePhase.RELEASED_A,), GamePhase.FINISHED),
}


def preparation_to_payload(p: Preparation) -> Dict[str, Any]:
    if isinstance(p, EpsilonPreparation):
        return {"kind": "epsilon", "epsilon": float(p.epsilon)}
    if isinstance(p, GeneralPreparation):
        entries = sorted(
            ([str(mode), k, float(v.real), float(v.imag)] for (mode, k), v in p.amplitudes.items()),
            key=lambda e: (e[0], e[1]),
        )
        return {
            "kind": "general",
            "ancilla_dim": p.ancilla_dim,
            "num_extra_boxes": p.num_extra_boxes,
            "amplitudes": entries,
        }
    raise InvalidPreparationError(f"Unsupported preparation type: {type(p).__name__}")


def preparation_from_payload(payload: Dict[str, Any]) -> Preparation:
    kind = payload.get("kind")
    if kind == "epsilon":
        return EpsilonPreparation(float(payload["epsilon"]))
    if kind == "general":
        amplitudes = {
            (ModeLabel.parse(mode), int(k)): complex(re, im)
            for mode, k, re, im in payload["amplitudes"]
        }
        return GeneralPreparation(amplitudes, int(payload["ancilla_dim"]), int(payload["num_extra_boxes"]))
    raise InvalidPreparationError(f"Unknown preparation kind: {kind!r}")


@dataclass
class _Game:
    rng: np.random.Generator
    phase: GamePhase = GamePhase.OPEN
    state: Optional[QuantumState] = None
    eta: Optional[float] = None
    lock: threading.Lock = field(default_factory=threading.Lock)


class PhysicsOracle:
    """Holds the joint state of every open game and applies quantum-core operations"""

    def __init__(self):
        self._games: Dict[str, _Game] = {}
        self._lock = threading.Lock()

    def open_game(self, game_id: str, rng: np.random.Generator) -> None:
        with self._lock:
            if game_id in self._games:
                raise ProtocolViolationError(f"Game {game_id} is already open")
            self._games[game_id] = _Game(rng=rng)

    def close_game(self, game_id: str) -> None:
        with self._lock:
            self._games.pop(game_id, None)

    def phase(self, game_id: str) -> GamePhase:
        return self._game(game_id).phase

    def _game(self, game_id: str) -> _Game:
        with self._lock:
            try:
                return self._games[game_id]
            except KeyError:
                raise UnknownGameError(f"No open game with id {game_id!r}") from None

    def handle(self, party: Party, request: OracleRequest) -> OracleReply:
        """Apply one request on behalf of ``party`` and return its classical outcome"""
        game = self._game(request.game_id)
        kind = request.type
        if ENTITLEMENTS[kind] is not party:
            raise ProtocolViolationError(f"{party.value} is not entitled to {kind.value}")

        with game.lock:
            allowed, next_phase = TRANSITIONS[kind]
            if game.phase not in allowed:
                raise ProtocolViolationError(
                    f"{kind.value} is out of order for game {request.game_id} (phase {game.phase.value})"
                )
            found = self._apply(game, request)
            game.phase = next_phase

        logger.debug("Oracle %s %s for %s -> %s", request.game_id, kind.value, party.value, found)
        return OracleReply(game_id=request.game_id, payload={"request": kind.value, "found": found})

    @staticmethod
    def _apply(game: _Game, request: OracleRequest) -> bool:
        kind = request.type
        if kind is OracleRequestType.PREPARE:
            game.state = prepare(preparation_from_payload(request.payload["preparation"]))
            return True
        if kind is OracleRequestType.SPLIT:
            game.eta = request.payload["eta"]
            game.state = split_b(game.state, game.eta)
            return True
        if kind is OracleRequestType.MEASURE_B:
            outcome = measure_mode(game.state, MODE_B, game.rng)
        elif kind is OracleRequestType.OPEN_A:
            outcome = measure_mode(game.state, MODE_A, game.rng)
        elif kind is OracleRequestType.RELEASE_A:
            return True
        elif kind is OracleRequestType.PROJECT_VERIFY:
            if request.payload["eta"] != game.eta:
                raise ProtocolViolationError("Verification must use the splitting parameter applied to box B")
            outcome = verify_preparation(game.state, game.eta, game.rng)
        else:
            raise ProtocolViolationError(f"Unsupported oracle request {kind.value}")
        game.state = outcome.post_state
        return outcome.found


def oracle_endpoint(oracle: PhysicsOracle, party: Party) -> Callable[[OracleRequest], OracleReply]:
    """Request handler bound to one party's entitlements"""
    def handler(request: OracleRequest) -> OracleReply:
        return oracle.handle(party, request)
    return handler


class OracleClient(Protocol):
    def request(self, request: OracleRequest) -> OracleReply:
        ...


class DirectOracleClient:
    """In-process access to the oracle"""

    def __init__(self, oracle: PhysicsOracle, party: Party):
        self._handler = oracle_endpoint(oracle, party)

    def request(self, request: OracleRequest) -> OracleReply:
        return self._handler(request)


class RemoteOracleClient:
    """Oracle access through the casino connection (the oracle is co-hosted there)"""

    def __init__(self, endpoint: Endpoint, timeout: Optional[float] = None):
        self._endpoint = endpoint
        self._timeout = timeout

    def request(self, request: OracleRequest) -> OracleReply:
        self._endpoint.send(request)
        reply = self._endpoint.recv(self._timeout)
        if not isinstance(reply, OracleReply):
            raise ProtocolViolationError(f"Expected an oracle reply, got {reply.type.value}")
        if reply.game_id != request.game_id or reply.payload["request"] != request.type.value:
            raise ProtocolViolationError(f"Oracle reply does not answer {request.type.value} of {request.game_id}")
        return reply
