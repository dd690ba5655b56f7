"""
Exception hierarchy shared by every module of the simulator
"""


class GamblingError(Exception):
    """Base class for all simulator errors"""


class InvalidPreparationError(GamblingError, ValueError):
    """Alice's preparation cannot be turned into a normalized state"""


class ParameterError(GamblingError, ValueError):
    """A numeric parameter lies outside its allowed range"""


class InternalConsistencyError(GamblingError):
    """A physics invariant was broken (e.g. renormalizing a zero vector)"""


class ProtocolViolationError(GamblingError):
    """A message or oracle request arrived out of phase"""


class UnknownGameError(ProtocolViolationError):
    """A message referenced a game_id that the session does not know"""


class EncodeError(GamblingError):
    """A message could not be framed"""


class DecodeError(GamblingError, ValueError):
    """A frame could not be turned back into a message"""


class IncompleteFrameError(DecodeError):
    """The byte sequence ends before the frame does"""


class ChannelClosedError(GamblingError, ConnectionError):
    """The peer went away"""


class ChannelTimeoutError(GamblingError, TimeoutError):
    """No message arrived within the receive timeout"""
