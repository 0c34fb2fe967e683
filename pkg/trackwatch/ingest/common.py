from ..domain.common import FieldRangeError, TrackwatchError

__all__ = (
    "IngestError",
    "MalformedLineError",
    "FieldRangeError",
    "AivdmError",
    "ChecksumMismatchError",
    "MultipartUnsupportedError",
    "NotPositionReportError",
    "MissingKinematicsError",
    "ArmoringError",
    "RECORD_FIELDS",
)

RECORD_FIELDS = ("mmsi", "timestamp", "lat", "lon", "sog", "cog", "source")


class IngestError(TrackwatchError, ValueError):
    """Input text could not be turned into an AisMessage."""


class MalformedLineError(IngestError):
    """Wrong arity or a field that does not parse as a finite number."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(message)


class AivdmError(IngestError):
    """An AIVDM sentence was rejected."""


class ChecksumMismatchError(AivdmError):
    pass


class MultipartUnsupportedError(AivdmError):
    """Only single-fragment sentences carry position reports we decode."""


class NotPositionReportError(AivdmError):
    """Message type is not 1, 2 or 3."""

    def __init__(self, message_type: int) -> None:
        self.message_type = message_type
        super().__init__(f"message type {message_type} is not a position report")


class MissingKinematicsError(AivdmError):
    """SOG or COG is flagged unavailable in the report."""

    def __init__(self, field: str) -> None:
        self.field = field
        super().__init__(f"{field} not available")


class ArmoringError(AivdmError):
    """Payload holds characters outside the 6-bit armoring table, or is too short."""
