"""
Wire Message Models
Classical messages between the parties and requests to the physics oracle.
None of these models can carry amplitudes: parties only ever see classical
outcomes.
"""
from __future__ import annotations

import enum
import math
from typing import Any, Dict, Tuple, Type

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Party(str, enum.Enum):
    ALICE = "alice"
    BOB = "bob"


class MessageType(str, enum.Enum):
    HELLO = "HELLO"
    ACCEPT = "ACCEPT"
    BOX_B_READY = "BOX_B_READY"
    CLAIM_WIN = "CLAIM_WIN"
    OPEN_A_RESULT = "OPEN_A_RESULT"
    REQUEST_BOX_A = "REQUEST_BOX_A"
    BOX_A_READY = "BOX_A_READY"
    VERIFY_RESULT = "VERIFY_RESULT"
    SETTLE = "SETTLE"
    CANCEL = "CANCEL"
    ABORT = "ABORT"


class OracleRequestType(str, enum.Enum):
    PREPARE = "PREPARE"
    SPLIT = "SPLIT"
    MEASURE_B = "MEASURE_B"
    OPEN_A = "OPEN_A"
    RELEASE_A = "RELEASE_A"
    PROJECT_VERIFY = "PROJECT_VERIFY"


class OracleReplyType(str, enum.Enum):
    ORACLE_RESULT = "ORACLE_RESULT"


# (field, python type) pairs that each payload must carry
_FLOAT = "float"
_INT = "int"
_BOOL = "bool"
_STR = "str"
_DICT = "dict"

MESSAGE_FIELDS: Dict[MessageType, Tuple[Tuple[str, str], ...]] = {
    MessageType.HELLO: (("R", _FLOAT), ("games", _INT)),
    MessageType.ACCEPT: (),
    MessageType.BOX_B_READY: (),
    MessageType.CLAIM_WIN: (),
    MessageType.OPEN_A_RESULT: (("found_in_a", _BOOL),),
    MessageType.REQUEST_BOX_A: (),
    MessageType.BOX_A_READY: (),
    MessageType.VERIFY_RESULT: (("detected", _BOOL),),
    MessageType.SETTLE: (("outcome", _STR), ("bob_gain", _FLOAT), ("alice_gain", _FLOAT)),
    MessageType.CANCEL: (("reason", _STR),),
    MessageType.ABORT: (("reason", _STR),),
}

ORACLE_FIELDS: Dict[OracleRequestType, Tuple[Tuple[str, str], ...]] = {
    OracleRequestType.PREPARE: (("preparation", _DICT),),
    OracleRequestType.SPLIT: (("eta", _FLOAT),),
    OracleRequestType.MEASURE_B: (),
    OracleRequestType.OPEN_A: (),
    OracleRequestType.RELEASE_A: (),
    OracleRequestType.PROJECT_VERIFY: (("eta", _FLOAT),),
}

REPLY_FIELDS: Dict[OracleReplyType, Tuple[Tuple[str, str], ...]] = {
    OracleReplyType.ORACLE_RESULT: (("request", _STR), ("found", _BOOL)),
}

# messages whose boolean result a faulty channel can flip
RESULT_FIELDS: Dict[MessageType, str] = {
    MessageType.OPEN_A_RESULT: "found_in_a",
    MessageType.VERIFY_RESULT: "detected",
}


def _normalize_payload(kind: str, payload: Any, fields: Tuple[Tuple[str, str], ...]) -> Dict[str, Any]:
    if not isinstance(payload, dict):
        raise ValueError(f"{kind} payload must be an object")
    normalized = dict(payload)
    for name, expected in fields:
        if name not in payload:
            raise ValueError(f"{kind} payload is missing mandatory field '{name}'")
        value = payload[name]
        if expected == _BOOL:
            if not isinstance(value, bool):
                raise ValueError(f"{kind}.{name} must be a boolean")
        elif expected == _FLOAT:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{kind}.{name} must be a number")
            try:
                normalized[name] = float(value)
            except OverflowError:
                raise ValueError(f"{kind}.{name} is out of range") from None
            if not math.isfinite(normalized[name]):
                raise ValueError(f"{kind}.{name} must be finite")
        elif expected == _INT:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"{kind}.{name} must be an integer")
        elif expected == _STR:
            if not isinstance(value, str):
                raise ValueError(f"{kind}.{name} must be a string")
        elif expected == _DICT:
            if not isinstance(value, dict):
                raise ValueError(f"{kind}.{name} must be an object")
    return normalized


class _Frame(BaseModel):
    model_config = ConfigDict(frozen=True)

    game_id: str = Field(min_length=1)
    payload: Dict[str, Any] = Field(default_factory=dict)

    def to_wire(self) -> Dict[str, Any]:
        return {"type": self.type.value, "game_id": self.game_id, "payload": dict(self.payload)}


class WireMessage(_Frame):
    """Tagged classical message exchanged between Alice and Bob"""

    type: MessageType

    @model_validator(mode="before")
    @classmethod
    def _check_payload(cls, data: Any) -> Any:
        if isinstance(data, dict) and "type" in data:
            kind = MessageType(data["type"])
            data = dict(data)
            data["payload"] = _normalize_payload(kind.value, data.get("payload", {}), MESSAGE_FIELDS[kind])
        return data


class OracleRequest(_Frame):
    """Operation a party asks the physics oracle to perform"""

    type: OracleRequestType

    @model_validator(mode="before")
    @classmethod
    def _check_payload(cls, data: Any) -> Any:
        if isinstance(data, dict) and "type" in data:
            kind = OracleRequestType(data["type"])
            data = dict(data)
            data["payload"] = _normalize_payload(kind.value, data.get("payload", {}), ORACLE_FIELDS[kind])
        return data


class OracleReply(_Frame):
    """Classical outcome of an oracle request; only a boolean ever comes back"""

    type: OracleReplyType = OracleReplyType.ORACLE_RESULT

    @model_validator(mode="before")
    @classmethod
    def _check_payload(cls, data: Any) -> Any:
        if isinstance(data, dict):
            kind = OracleReplyType(data.get("type", OracleReplyType.ORACLE_RESULT))
            data = dict(data)
            data["payload"] = _normalize_payload(kind.value, data.get("payload", {}), REPLY_FIELDS[kind])
            allowed = {name for name, _ in REPLY_FIELDS[kind]}
            extra = set(data["payload"]) - allowed
            if extra:
                raise ValueError(f"{kind.value} payload carries unexpected fields {sorted(extra)}")
        return data


def frame_model(type_tag: str) -> Type[_Frame]:
    """Model class for a wire type tag; raises KeyError for unknown tags"""
    if type_tag in MessageType.__members__:
        return WireMessage
    if type_tag in OracleRequestType.__members__:
        return OracleRequest
    if type_tag in OracleReplyType.__members__:
        return OracleReply
    raise KeyError(type_tag)


def message(kind: MessageType, game_id: str, **payload: Any) -> WireMessage:
    return WireMessage(type=kind, game_id=game_id, payload=payload)


def oracle_request(kind: OracleRequestType, game_id: str, **payload: Any) -> OracleRequest:
    return OracleRequest(type=kind, game_id=game_id, payload=payload)
