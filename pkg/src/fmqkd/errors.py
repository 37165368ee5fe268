"""Exception hierarchy shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or run-config file."""


class UndefinedRateError(ValueError):
    """A rate is requested over an empty or zero-probability ensemble."""


class KeyFileError(ValueError):
    """Malformed or truncated key file."""


class BitSourceExhausted(RuntimeError):
    """A bit source ran out of bits before the session finished."""


class ChannelError(RuntimeError):
    """Transport-level failure (connect, reset, premature close)."""


class ProtocolViolationError(RuntimeError):
    """Peer sent a frame that violates the wire protocol."""


class IncompleteFrameError(ProtocolViolationError):
    """Byte buffer ends before the frame it starts is complete."""


class SessionAborted(RuntimeError):
    """Session ended early; ``partial`` carries the statistics so far."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
