"""Exception types shared across the avt package."""


class AvtError(Exception):
    """Base class for all errors raised by this package."""


class MalformedName(AvtError):
    """Trip name does not match the rider_date_timestamp convention."""


class DateMismatch(AvtError):
    """Trip name date segment disagrees with the UTC date of its timestamp."""


class NotADirectory(AvtError):
    pass


class InvalidScenario(AvtError):
    pass


class ClockRegression(AvtError):
    """Event timestamp earlier than the last one seen by the power FSM."""


class DiskFull(AvtError):
    pass


class SubsystemFailed(AvtError):
    def __init__(self, kind: str, message: str = ""):
        super().__init__(message or f"subsystem {kind} failed after restart budget")
        self.kind = kind


class SinkClosed(AvtError):
    pass


class UnreadableFile(AvtError):
    pass


class SpecOutOfRange(AvtError):
    """Signal bits extend past the frame payload."""


class BackupFailed(AvtError):
    pass


class EmptyOverlap(AvtError):
    """Camera recordings share no common time range."""


class NoFrameBefore(AvtError):
    """Camera has no frame at or before the grid origin."""


class ForeignKeyViolation(AvtError):
    pass


class DuplicateTrip(AvtError):
    pass


class UnknownLabel(AvtError):
    pass


class BadKey(AvtError):
    pass


class UnknownSender(AvtError):
    pass


class AuthenticationFailed(AvtError):
    pass


class ReplayDetected(AvtError):
    pass
