"""
Channels Module
Two interchangeable message channels with the same delivery contract
(reliable, ordered, exactly once): an in-process queue pair and a framed
stream socket. Also the per-run fault injector used by the error model.
"""
from __future__ import annotations

import abc
import collections
import logging
import queue
import socket
from typing import Deque, Optional, Tuple, Union

import numpy as np

import config
from src.exceptions import ChannelClosedError, ChannelTimeoutError, ParameterError
from src.messages import RESULT_FIELDS, WireMessage
from src.wire_codec import Frame, FrameBuffer, encode

logger = logging.getLogger(__name__)

_CLOSED = object()


class Endpoint(abc.ABC):
    """One side of a bidirectional message channel"""

    @abc.abstractmethod
    def send(self, message: Frame) -> None:
        ...

    @abc.abstractmethod
    def recv(self, timeout: Optional[float] = None) -> Frame:
        """Block for the next message; timeout 0 polls"""

    @abc.abstractmethod
    def pending(self) -> bool:
        """True when a message can be received without blocking"""

    @abc.abstractmethod
    def close(self) -> None:
        ...

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LocalEndpoint(Endpoint):
    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False
        self._peer_closed = False

    def send(self, message: Frame) -> None:
        if self._closed or self._peer_closed:
            raise ChannelClosedError("Local channel is closed")
        self._outbox.put(message)

    def recv(self, timeout: Optional[float] = None) -> Frame:
        if self._peer_closed:
            raise ChannelClosedError("Peer closed the local channel")
        try:
            if timeout == 0:
                item = self._inbox.get_nowait()
            else:
                item = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise ChannelTimeoutError(f"No message within {timeout}s") from None
        if item is _CLOSED:
            self._peer_closed = True
            raise ChannelClosedError("Peer closed the local channel")
        return item

    def pending(self) -> bool:
        return not self._inbox.empty()

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


def channel_pair() -> Tuple[LocalEndpoint, LocalEndpoint]:
    """Two connected in-process endpoints"""
    forward: queue.Queue = queue.Queue()
    backward: queue.Queue = queue.Queue()
    return LocalEndpoint(backward, forward), LocalEndpoint(forward, backward)


class SocketEndpoint(Endpoint):
    """Frames messages over a connected stream socket"""

    RECV_CHUNK = 65536

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buffer = FrameBuffer()
        self._frames: Deque[Frame] = collections.deque()
        self._closed = False

    @property
    def peer(self) -> str:
        try:
            host, port = self._sock.getpeername()[:2]
            return f"{host}:{port}"
        except OSError:
            return "<disconnected>"

    def send(self, message: Frame) -> None:
        if self._closed:
            raise ChannelClosedError("Socket endpoint is closed")
        try:
            self._sock.sendall(encode(message))
        except OSError as exc:
            raise ChannelClosedError(f"Send failed: {exc}") from exc

    def _fill(self, timeout: Optional[float]) -> None:
        # a malformed frame left over from the last chunk raises here
        self._frames.extend(self._buffer.feed(b""))
        if self._frames:
            return
        self._sock.settimeout(timeout)
        try:
            data = self._sock.recv(self.RECV_CHUNK)
        except socket.timeout:
            raise ChannelTimeoutError(f"No message within {timeout}s") from None
        except BlockingIOError:
            raise ChannelTimeoutError("No message available") from None
        except OSError as exc:
            raise ChannelClosedError(f"Receive failed: {exc}") from exc
        if not data:
            raise ChannelClosedError("Peer closed the connection")
        self._frames.extend(self._buffer.feed(data))

    def recv(self, timeout: Optional[float] = None) -> Frame:
        if self._closed:
            raise ChannelClosedError("Socket endpoint is closed")
        while not self._frames:
            self._fill(timeout)
        return self._frames.popleft()

    def pending(self) -> bool:
        if self._frames:
            return True
        try:
            self._fill(0)
        except ChannelTimeoutError:
            return False
        return bool(self._frames)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class Listener:
    """Accepts framed socket connections"""

    def __init__(self, port: int, host: str = None):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host or config.GAMBLING_HOST, port))
        self._sock.listen(1)

    @property
    def address(self) -> Tuple[str, int]:
        host, port = self._sock.getsockname()[:2]
        return host, port

    def accept(self, timeout: Optional[float] = None) -> SocketEndpoint:
        """
        Wait for one player to connect

        Args:
            timeout: Seconds to wait; None blocks

        Returns:
            Framed endpoint over the accepted connection

        Raises:
            ChannelTimeoutError: If nobody connects in time
        """
        self._sock.settimeout(timeout)
        try:
            conn, addr = self._sock.accept()
        except socket.timeout:
            raise ChannelTimeoutError(f"No connection within {timeout}s") from None
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn.settimeout(None)
        logger.info("Accepted connection from %s:%s", addr[0], addr[1])
        return SocketEndpoint(conn)

    def close(self) -> None:
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def listen(port: int = None, host: str = None) -> Listener:
    """
    Open a listening socket for the casino

    Args:
        port: TCP port; 0 picks a free one, None uses GAMBLING_PORT
        host: Bind address, GAMBLING_HOST by default

    Returns:
        Listener bound and listening
    """
    return Listener(config.GAMBLING_PORT if port is None else port, host)


def parse_address(address: Union[str, Tuple[str, int]]) -> Tuple[str, int]:
    """Split "host:port" into a tuple; a bare host gets the default port"""
    if isinstance(address, tuple):
        return address
    host, sep, port = address.rpartition(":")
    if not sep:
        return address, config.GAMBLING_PORT
    if not port.isdigit():
        raise ParameterError(f"Invalid port in address {address!r}")
    return host or config.GAMBLING_HOST, int(port)


def connect(address: Union[str, Tuple[str, int]], timeout: Optional[float] = None) -> SocketEndpoint:
    """
    Connect to a casino

    Args:
        address: "host:port" string or (host, port) tuple
        timeout: Connect timeout in seconds, RECV_TIMEOUT by default

    Returns:
        Framed endpoint over the new connection

    Raises:
        ChannelClosedError: If the connection is refused or unreachable
    """
    host, port = parse_address(address)
    try:
        sock = socket.create_connection((host, port), timeout=timeout or config.RECV_TIMEOUT)
    except OSError as exc:
        raise ChannelClosedError(f"Cannot connect to {host}:{port}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    sock.settimeout(None)
    logger.info("Connected to %s:%d", host, port)
    return SocketEndpoint(sock)


class FaultInjector:
    """Corrupts at most one result-bearing message per game.

    For each game, with probability ``p_err``, the boolean of the first
    OPEN_A_RESULT or VERIFY_RESULT that crosses the channel is flipped, so the
    parties end up disagreeing about that run.
    """

    def __init__(self, p_err: float):
        if not 0.0 <= p_err <= 1.0:
            raise ParameterError(f"Error rate must lie in [0, 1], got {p_err}")
        self.p_err = p_err
        self._armed = {}

    def begin_game(self, game_id: str, rng: np.random.Generator) -> None:
        self._armed[game_id] = bool(rng.random() < self.p_err)

    def end_game(self, game_id: str) -> None:
        self._armed.pop(game_id, None)

    def pass_through(self, message: Frame) -> Frame:
        if not isinstance(message, WireMessage) or message.type not in RESULT_FIELDS:
            return message
        if not self._armed.get(message.game_id):
            return message
        self._armed[message.game_id] = False
        field = RESULT_FIELDS[message.type]
        payload = dict(message.payload)
        payload[field] = not payload[field]
        logger.debug("Corrupted %s of game %s in transit", message.type.value, message.game_id)
        return WireMessage(type=message.type, game_id=message.game_id, payload=payload)


class FaultyEndpoint(Endpoint):
    """Endpoint wrapper that routes both directions through a FaultInjector"""

    def __init__(self, inner: Endpoint, injector: FaultInjector):
        self._inner = inner
        self.injector = injector

    def send(self, message: Frame) -> None:
        self._inner.send(self.injector.pass_through(message))

    def recv(self, timeout: Optional[float] = None) -> Frame:
        return self.injector.pass_through(self._inner.recv(timeout))

    def pending(self) -> bool:
        return self._inner.pending()

    def close(self) -> None:
        self._inner.close()
