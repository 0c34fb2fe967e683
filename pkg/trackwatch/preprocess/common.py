from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ..domain.common import AisMessage, Roi, Track, TrackwatchError

__all__ = [
    "PreprocessConfig",
    "PreprocessConfigError",
    "TooFewPointsError",
    "DropReason",
    "TrackOpened",
    "TrackExtended",
    "TrackClosed",
    "DetectionDue",
    "PreprocessCounters",
]


class PreprocessConfigError(TrackwatchError, ValueError):
    """Preprocessing knobs are inconsistent."""


class TooFewPointsError(TrackwatchError, ValueError):
    """Resampling needs at least two points."""


@dataclass(frozen=True)
class PreprocessConfig:
    roi: Roi
    max_sog_knots: float = 30.0
    gap_threshold_s: int = 4 * 3600
    resample_period_s: int = 600
    min_track_duration_s: int = 4 * 3600
    redetect_period_s: int = 3600

    def __post_init__(self):
        for name in ("gap_threshold_s", "resample_period_s", "min_track_duration_s", "redetect_period_s"):
            if not getattr(self, name) > 0:
                raise PreprocessConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.max_sog_knots > 0:
            raise PreprocessConfigError(f"max_sog_knots must be positive, got {self.max_sog_knots}")
        if self.resample_period_s > self.min_track_duration_s:
            raise PreprocessConfigError(
                f"resample_period_s {self.resample_period_s} exceeds "
                f"min_track_duration_s {self.min_track_duration_s}"
            )

    @property
    def min_points(self) -> int:
        """Resampled points in a track that just reached the minimum duration."""
        return self.min_track_duration_s // self.resample_period_s + 1


class DropReason(str, Enum):
    OUT_OF_ROI = "out-of-roi"
    OVER_SPEED = "over-speed"
    NON_MONOTONE_TIME = "non-monotone-time"
    DUPLICATE_TIME = "duplicate-time"

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class TrackOpened:
    mmsi: int
    track_id: str


@dataclass(frozen=True)
class TrackExtended:
    mmsi: int
    track_id: str
    n_points: int


@dataclass(frozen=True)
class TrackClosed:
    track: Track
    tested: bool

    @property
    def track_id(self) -> str:
        return self.track.track_id


@dataclass(frozen=True)
class DetectionDue:
    """`track` is already resampled; `watermark` is the raw end timestamp."""

    track: Track
    track_id: str
    watermark: int


@dataclass
class PreprocessCounters:
    processed: int = 0
    kept: int = 0
    dropped: Counter = field(default_factory=Counter)
    built: int = 0
    rejected: int = 0
    tested: int = 0

    def count_message(self, reason: Optional[DropReason]):
        self.processed += 1
        if reason is None:
            self.kept += 1
        else:
            self.dropped[reason] += 1

    def count_closed(self, event: TrackClosed):
        self.built += 1
        if event.tested:
            self.tested += 1
        else:
            self.rejected += 1

    @property
    def n_dropped(self) -> int:
        return sum(self.dropped.values())

    def merge(self, other: "PreprocessCounters") -> "PreprocessCounters":
        return PreprocessCounters(
            processed=self.processed + other.processed,
            kept=self.kept + other.kept,
            dropped=self.dropped + other.dropped,
            built=self.built + other.built,
            rejected=self.rejected + other.rejected,
            tested=self.tested + other.tested,
        )

    def copy(self) -> "PreprocessCounters":
        return PreprocessCounters().merge(self)

    def as_dict(self) -> dict:
        return {
            "processed": self.processed,
            "kept": self.kept,
            "dropped": self.n_dropped,
            "built": self.built,
            "rejected": self.rejected,
            "tested": self.tested,
        }
