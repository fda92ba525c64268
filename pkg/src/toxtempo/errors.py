"""Exception types shared across the package.

Names follow the operation contracts: ingestion raises FormatError /
ValidationError, metrics raise the TooFew* family, scoring raises
MissingText / RemoteError.
"""


class ToxtempoError(Exception):
    """Base class for all package errors."""


class FormatError(ToxtempoError):
    """A record could not be parsed at all (malformed JSON/CSV, bad header)."""

    def __init__(self, line_number: int, reason: str, source: str | None = None):
        self.line_number = line_number
        self.reason = reason
        self.source = source
        where = f"{source}:{line_number}" if source else f"line {line_number}"
        super().__init__(f"{where}: {reason}")


class ValidationError(ToxtempoError):
    """A parsed record violates a domain invariant (range, timestamp floor...)."""

    def __init__(self, user_id: str, reason: str):
        self.user_id = user_id
        self.reason = reason
        super().__init__(f"user {user_id!r}: {reason}")


class TooFewEvents(ToxtempoError):
    """Timeline has fewer events than the operation requires."""


class TooFewIntervals(ToxtempoError):
    """Burstiness needs at least two inter-event times."""


class TooFewUsers(ToxtempoError):
    """Cohort classification needs at least two users with defined metrics."""


class EmptyInput(ToxtempoError):
    """An aggregate was asked for on an empty value list."""


class LengthMismatch(ToxtempoError):
    """Paired vectors differ in length."""


class DegenerateConstantInput(ToxtempoError):
    """Rank correlation is undefined when either vector is constant."""


class UnscoredEvent(ToxtempoError):
    """An event is missing its toxicity score where one is required."""

    def __init__(self, user_id: str, event_id: str):
        self.user_id = user_id
        self.event_id = event_id
        super().__init__(f"event {event_id!r} of user {user_id!r} has no toxicity score")


class MissingText(ToxtempoError):
    """An event that must be scored has no text."""

    def __init__(self, user_id: str, event_id: str):
        self.user_id = user_id
        self.event_id = event_id
        super().__init__(f"event {event_id!r} of user {user_id!r} has no text to score")


class RemoteError(ToxtempoError):
    """The remote scoring endpoint failed after all retries."""

    def __init__(self, status: int | None, body: str):
        self.status = status
        self.body = body
        super().__init__(f"remote scorer failed (status={status}): {body[:200]}")


class InvalidSpec(ToxtempoError):
    """A synthetic-generator spec is inconsistent."""


class ConfigError(ToxtempoError):
    """A run configuration is invalid or incomplete."""
