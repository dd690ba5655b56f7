"""
Wire Codec Module
4-byte big-endian length prefix followed by a canonical, key-sorted UTF-8
JSON body with the fields "type", "game_id" and "payload".
"""
from __future__ import annotations

import json
import math
import struct
from typing import List, Optional, Union

from pydantic import ValidationError

import config
from src.exceptions import DecodeError, EncodeError, IncompleteFrameError
from src.messages import OracleReply, OracleRequest, WireMessage, frame_model

WIRE_VERSION = 1
HEADER = struct.Struct(">I")
HEADER_SIZE = HEADER.size
FRAME_KEYS = {"type", "game_id", "payload"}

Frame = Union[WireMessage, OracleRequest, OracleReply]


def canonical_body(msg: Frame) -> bytes:
    try:
        text = json.dumps(msg.to_wire(), sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise EncodeError(f"Cannot serialize {msg.type.value} message: {exc}") from exc
    return text.encode("utf-8")


def encode(msg: Frame) -> bytes:
    """Frame one message"""
    body = canonical_body(msg)
    if len(body) > config.MAX_PAYLOAD_BYTES:
        raise EncodeError(f"Message body of {len(body)} bytes exceeds the {config.MAX_PAYLOAD_BYTES}-byte limit")
    return HEADER.pack(len(body)) + body


def frame_length(data: bytes) -> int:
    """Body length announced by a header; validates the announced size"""
    if len(data) < HEADER_SIZE:
        raise IncompleteFrameError(f"Need {HEADER_SIZE} header bytes, have {len(data)}")
    (length,) = HEADER.unpack_from(data)
    if length > config.MAX_PAYLOAD_BYTES:
        raise DecodeError(f"Malformed length prefix: {length} exceeds the {config.MAX_PAYLOAD_BYTES}-byte limit")
    return length


def _reject_constant(name: str) -> float:
    raise DecodeError(f"Frame body carries the non-finite number {name}")


def _finite_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise DecodeError(f"Frame body carries the out-of-range number {text}")
    return value


def decode_body(body: bytes) -> Frame:
    """Parse and validate one frame body; numbers must be finite, as on encode"""
    try:
        text = body.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"Frame body is not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(text, parse_constant=_reject_constant, parse_float=_finite_float)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"Frame body is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise DecodeError("Frame body must be an object")
    missing = FRAME_KEYS - set(obj)
    if missing:
        raise DecodeError(f"Frame is missing mandatory field(s) {sorted(missing)}")
    extra = set(obj) - FRAME_KEYS
    if extra:
        raise DecodeError(f"Frame carries unknown field(s) {sorted(extra)}")

    tag = obj["type"]
    try:
        model = frame_model(tag)
    except (KeyError, TypeError):
        raise DecodeError(f"Unknown message type {tag!r} (wire version {WIRE_VERSION})") from None
    try:
        return model.model_validate(obj)
    except ValidationError as exc:
        raise DecodeError(f"Invalid {tag} message: {exc.errors()[0]['msg']}") from exc


def decode(data: bytes) -> Frame:
    """Inverse of encode for exactly one complete frame"""
    length = frame_length(data)
    end = HEADER_SIZE + length
    if len(data) < end:
        raise IncompleteFrameError(f"Frame announces {length} body bytes, have {len(data) - HEADER_SIZE}")
    if len(data) > end:
        raise DecodeError(f"{len(data) - end} trailing bytes after frame")
    return decode_body(data[HEADER_SIZE:end])


class FrameBuffer:
    """Incremental decoder for a byte stream carrying back-to-back frames.

    A frame's bytes leave the buffer only once it decoded. When a malformed
    frame follows good ones in the same chunk, the good frames are returned
    and the error is raised by the next call; the malformed bytes stay
    buffered, so every later call raises too.
    """

    def __init__(self):
        self._buffer = bytearray()
        self._error: Optional[DecodeError] = None

    def feed(self, data: bytes) -> List[Frame]:
        """
        Append bytes and decode every complete frame

        Args:
            data: Bytes read from the stream, possibly empty

        Returns:
            Frames completed by this call, in stream order

        Raises:
            DecodeError: The stream holds a malformed frame
        """
        self._buffer.extend(data)
        if self._error is not None:
            error, self._error = self._error, None
            raise error

        frames: List[Frame] = []
        while True:
            try:
                length = frame_length(bytes(self._buffer[:HEADER_SIZE]))
                end = HEADER_SIZE + length
                if len(self._buffer) < end:
                    break
                frame = decode_body(bytes(self._buffer[HEADER_SIZE:end]))
            except IncompleteFrameError:
                break
            except DecodeError as exc:
                if not frames:
                    raise
                self._error = exc
                break
            del self._buffer[:end]
            frames.append(frame)
        return frames

    @property
    def buffered(self) -> int:
        return len(self._buffer)
