"""Exception hierarchy shared across the package.

Usage-type errors (bad arguments, malformed input) map to CLI exit code 1,
everything else to exit code 2.
"""


class ProdEmbedError(Exception):
    """Base class for all package errors."""


class UsageError(ProdEmbedError, ValueError):
    """Caller passed arguments that violate an operation's contract."""


class ParseError(UsageError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)


class ConfigError(UsageError):
    pass


class InvalidPointError(ProdEmbedError, ValueError):
    pass


class InvalidTangentError(ProdEmbedError, ValueError):
    pass


class UndefinedDirectionError(ProdEmbedError, ValueError):
    pass


class DivergedError(ProdEmbedError, RuntimeError):
    pass


class PoisonedValueError(ProdEmbedError, FloatingPointError):
    pass


class DisconnectedGraphError(ProdEmbedError, ValueError):
    def __init__(self, u, v):
        self.pair = (u, v)
        super().__init__(f"graph is disconnected: node {v} is unreachable from node {u}")


class CheckpointError(ProdEmbedError, IOError):
    pass


class NumericClampWarning(RuntimeWarning):
    """A ball-model result was pulled back inside the ball."""
