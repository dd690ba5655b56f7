"""
Tests for src/wire_codec.py and the message models in src/messages.py
"""
import json

import numpy as np
import pytest
from pydantic import ValidationError

import config
from src.exceptions import DecodeError, EncodeError, IncompleteFrameError
from src.messages import (
    MESSAGE_FIELDS,
    MessageType,
    OracleReply,
    OracleRequestType,
    WireMessage,
    message,
    oracle_request,
)
from src.wire_codec import HEADER, FrameBuffer, canonical_body, decode, encode

TEXTS = ["", "AliceWins", "peer timeout", "déjà vu", "箱 A", "eps=0.25"]


def _frame(obj) -> bytes:
    body = json.dumps(obj).encode("utf-8")
    return HEADER.pack(len(body)) + body


def _random_message(rng: np.random.Generator) -> WireMessage:
    kind = list(MessageType)[rng.integers(len(MessageType))]
    payload = {}
    for name, expected in MESSAGE_FIELDS[kind]:
        if expected == "float":
            payload[name] = float(rng.normal(scale=10.0 ** rng.integers(-6, 7)))
        elif expected == "int":
            payload[name] = int(rng.integers(0, 2 ** 31))
        elif expected == "bool":
            payload[name] = bool(rng.integers(2))
        else:
            payload[name] = TEXTS[rng.integers(len(TEXTS))]
    return message(kind, f"g{int(rng.integers(10 ** 6)):06d}", **payload)


class TestEncoding:
    def test_canonical_bytes(self):
        msg = message(MessageType.SETTLE, "g000001", outcome="AliceWins", bob_gain=-1.0, alice_gain=1.0)
        expected = (
            b'{"game_id":"g000001","payload":{"alice_gain":1.0,"bob_gain":-1.0,'
            b'"outcome":"AliceWins"},"type":"SETTLE"}'
        )
        assert canonical_body(msg) == expected
        assert encode(msg) == HEADER.pack(len(expected)) + expected

    def test_field_order_does_not_matter(self):
        a = message(MessageType.HELLO, "session", R=100.0, games=5)
        b = message(MessageType.HELLO, "session", games=5, R=100.0)
        assert encode(a) == encode(b)

    def test_integer_reward_is_normalized(self):
        msg = message(MessageType.HELLO, "session", R=100, games=5)
        assert msg.payload["R"] == 100.0
        assert decode(encode(msg)).payload["R"] == 100.0

    def test_oversize_message_rejected(self):
        msg = message(MessageType.CANCEL, "g000000", reason="x" * (config.MAX_PAYLOAD_BYTES + 1))
        with pytest.raises(EncodeError):
            encode(msg)

    def test_model_rejects_missing_field(self):
        with pytest.raises(ValidationError):
            message(MessageType.VERIFY_RESULT, "g000000")

    def test_model_rejects_wrong_type(self):
        with pytest.raises(ValidationError):
            message(MessageType.OPEN_A_RESULT, "g000000", found_in_a=1)


class TestDecoding:
    def test_round_trip_corpus(self):
        rng = np.random.default_rng(99)
        for _ in range(10000):
            msg = _random_message(rng)
            assert decode(encode(msg)) == msg

    def test_oracle_frames_round_trip(self):
        req = oracle_request(OracleRequestType.SPLIT, "g000003", eta=0.07)
        reply = OracleReply(game_id="g000003", payload={"request": "SPLIT", "found": True})
        assert decode(encode(req)) == req
        assert decode(encode(reply)).model_dump() == reply.model_dump()

    def test_unknown_type_is_named(self):
        with pytest.raises(DecodeError, match="FOO"):
            decode(_frame({"type": "FOO", "game_id": "g000000", "payload": {}}))

    def test_empty_input(self):
        with pytest.raises(IncompleteFrameError):
            decode(b"")

    def test_every_truncation_is_incomplete(self):
        data = encode(message(MessageType.VERIFY_RESULT, "g000042", detected=False))
        for k in range(len(data)):
            with pytest.raises(IncompleteFrameError):
                decode(data[:k])

    def test_trailing_bytes(self):
        data = encode(message(MessageType.CLAIM_WIN, "g000000"))
        with pytest.raises(DecodeError) as info:
            decode(data + b"\x00")
        assert not isinstance(info.value, IncompleteFrameError)

    def test_oversize_length_prefix(self):
        with pytest.raises(DecodeError) as info:
            decode(HEADER.pack(config.MAX_PAYLOAD_BYTES + 1) + b"{}")
        assert not isinstance(info.value, IncompleteFrameError)

    @pytest.mark.parametrize("body", [
        b"\xff\xfe",
        b"[1, 2]",
        b"{not json",
        b'{"type": "CLAIM_WIN", "payload": {}}',
        b'{"type": "CLAIM_WIN", "game_id": "g1", "payload": {}, "extra": 1}',
        b'{"type": "VERIFY_RESULT", "game_id": "g1", "payload": {"detected": "yes"}}',
        b'{"type": "SETTLE", "game_id": "g1", "payload": {"outcome": "AliceWins"}}',
        b'{"type": "CLAIM_WIN", "game_id": "", "payload": {}}',
    ])
    def test_malformed_bodies(self, body):
        with pytest.raises(DecodeError):
            decode(HEADER.pack(len(body)) + body)

    @pytest.mark.parametrize("body", [
        b'{"type": "HELLO", "game_id": "session", "payload": {"R": 1e309, "games": 3}}',
        b'{"type": "HELLO", "game_id": "session", "payload": {"R": Infinity, "games": 3}}',
        b'{"type": "HELLO", "game_id": "session", "payload": {"R": NaN, "games": 3}}',
        b'{"type": "SPLIT", "game_id": "g1", "payload": {"eta": -Infinity}}',
        b'{"type": "HELLO", "game_id": "session", "payload": {"R": ' + b"1" * 400 + b', "games": 3}}',
    ])
    def test_non_finite_numbers(self, body):
        with pytest.raises(DecodeError):
            decode(HEADER.pack(len(body)) + body)

    def test_oracle_reply_cannot_carry_state(self):
        frame = {
            "type": "ORACLE_RESULT",
            "game_id": "g1",
            "payload": {"request": "MEASURE_B", "found": False, "amplitudes": [[0.7, 0.0]]},
        }
        with pytest.raises(DecodeError):
            decode(_frame(frame))


class TestFrameBuffer:
    def test_byte_by_byte_stream(self):
        messages = [
            message(MessageType.BOX_B_READY, "g000000"),
            message(MessageType.CLAIM_WIN, "g000000"),
            message(MessageType.OPEN_A_RESULT, "g000000", found_in_a=False),
        ]
        stream = b"".join(encode(m) for m in messages)
        buffer = FrameBuffer()
        received = []
        for i in range(len(stream)):
            received.extend(buffer.feed(stream[i:i + 1]))
        assert received == messages
        assert buffer.buffered == 0

    def test_partial_frame_stays_buffered(self):
        data = encode(message(MessageType.REQUEST_BOX_A, "g000007"))
        buffer = FrameBuffer()
        assert buffer.feed(data[:-3]) == []
        assert buffer.buffered == len(data) - 3
        assert len(buffer.feed(data[-3:])) == 1

    def test_good_frames_survive_a_malformed_successor(self):
        good = message(MessageType.BOX_B_READY, "g000003")
        bad = b"{not json"
        buffer = FrameBuffer()
        assert buffer.feed(encode(good) + HEADER.pack(len(bad)) + bad) == [good]
        assert buffer.buffered == HEADER.size + len(bad)
        with pytest.raises(DecodeError):
            buffer.feed(b"")
        with pytest.raises(DecodeError):
            buffer.feed(encode(good))

    def test_malformed_first_frame_raises_at_once(self):
        bad = b"[1, 2]"
        buffer = FrameBuffer()
        with pytest.raises(DecodeError):
            buffer.feed(HEADER.pack(len(bad)) + bad)
        assert buffer.buffered == HEADER.size + len(bad)
