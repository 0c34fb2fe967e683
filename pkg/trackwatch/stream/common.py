from dataclasses import dataclass
from typing import Tuple

from ..domain.common import TrackwatchError

__all__ = [
    "StreamSettings",
    "StreamConfigError",
    "LogClosedError",
    "PartitionFileError",
    "BindError",
    "GeofenceViolation",
]


class StreamConfigError(TrackwatchError, ValueError):
    """Partition or replica counts are inconsistent."""


class LogClosedError(TrackwatchError):
    """Publish on a closed log."""


class PartitionFileError(TrackwatchError):
    """A partition file is truncated or not a partition file."""


class BindError(TrackwatchError, OSError):
    """The live listener could not bind its address."""


@dataclass(frozen=True)
class StreamSettings:
    n_partitions: int = 16
    replicas: int = 1
    commit_interval: int = 64
    queue_size: int = 10_000

    def __post_init__(self):
        if self.n_partitions < 1:
            raise StreamConfigError(f"n_partitions must be at least 1, got {self.n_partitions}")
        if not 1 <= self.replicas <= self.n_partitions:
            raise StreamConfigError(
                f"replicas must be in [1, n_partitions={self.n_partitions}], got {self.replicas}"
            )
        if self.commit_interval < 1:
            raise StreamConfigError(f"commit_interval must be at least 1, got {self.commit_interval}")
        if self.queue_size < 1:
            raise StreamConfigError(f"queue_size must be at least 1, got {self.queue_size}")


@dataclass(frozen=True)
class GeofenceViolation:
    mmsi: int
    track_id: str
    timestamp: int
    zones: Tuple[str, ...]

    def as_alert(self) -> dict:
        return {
            "kind": "geofence",
            "mmsi": self.mmsi,
            "track_id": self.track_id,
            "timestamp": self.timestamp,
            "zones": list(self.zones),
        }
