"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class OutOfDomainError(InvalidArgumentError):
    """A point lies outside the truncated domain [-L, L]."""


class NumericalBlowupError(RuntimeError):
    """A time integration produced non-finite values.

    The last finite state is kept on ``state`` for post-mortem inspection.
    """

    def __init__(self, message, step=None, state=None):
        super().__init__(message)
        self.step = step
        self.state = state


class MaxStepsExceededError(RuntimeError):
    """The steady-state driver hit its step limit before converging."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InsufficientDataError(ValueError):
    """A fit was requested on a series too short or degenerate to support it."""


class ConfigError(ValueError):
    """A run configuration is malformed; the message names the key and line."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
