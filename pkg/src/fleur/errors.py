"""Exception types shared across the package."""


class FleurError(Exception):
    """Base class for all errors raised by this package."""


class PromptError(FleurError):
    """Invalid prompt inputs (empty caption, empty reference list, bad criteria subset)."""


class TransportError(FleurError):
    """Backend could not be reached; retryable at the caller's discretion."""


class BackendConfigError(FleurError):
    """Backend answered but cannot serve this workload (e.g. refuses logprobs)."""


class TruncationError(FleurError):
    """Generation hit the token limit before a usable score was emitted."""


class ScriptExhaustedError(FleurError):
    """Scripted mock backend received more requests than it has entries."""


class NoScoreError(FleurError):
    """No numeric score could be located in the generated output."""


class TokenGranularityError(FleurError):
    """A score digit is not isolated in its own token, so per-digit probabilities are unavailable."""

    def __init__(self, message: str, token: str):
        super().__init__(message)
        self.token = token


class MissingLogprobsError(FleurError):
    """The backend result lacks alternative-token logprobs at a position the score needs."""


class ScoreOutOfRangeError(FleurError):
    """A parsed raw score lies outside [0, 1]."""


class DatasetError(FleurError):
    """Malformed dataset file; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UndefinedStatisticError(FleurError):
    """The requested statistic is undefined for this input (e.g. all-tied ranks)."""
