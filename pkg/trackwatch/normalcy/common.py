from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

from ..domain.common import TrackwatchError

__all__ = [
    "NormalcySettings",
    "Aggregation",
    "Decision",
    "MessageFlag",
    "Verdict",
    "EmptyTrainingSetError",
    "TrackTooShortError",
    "DomainError",
    "ModelFileError",
    "ModelIOError",
    "VersionMismatchError",
    "CorruptChecksumError",
]


class EmptyTrainingSetError(TrackwatchError, ValueError):
    """No training message survived preprocessing."""


class TrackTooShortError(TrackwatchError, ValueError):
    """The track has fewer resampled points than the detector requires."""


class DomainError(TrackwatchError, ValueError):
    """An argument is outside the domain of a statistical function."""


class ModelFileError(TrackwatchError):
    """A model file could not be used."""


class ModelIOError(ModelFileError):
    pass


class VersionMismatchError(ModelFileError):
    pass


class CorruptChecksumError(ModelFileError):
    """Truncated file or CRC mismatch."""


class Aggregation(str, Enum):
    NFA = "nfa"
    RATIO = "ratio"


@dataclass(frozen=True)
class NormalcySettings:
    alpha: float = 1.0
    q: float = 0.05
    min_cell_count: int = 50
    epsilon_nfa: float = 1.0
    aggregation: Aggregation = Aggregation.NFA
    ratio_threshold: float = 0.5

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.q < 1:
            raise DomainError(f"q must be in (0, 1), got {self.q}")
        if self.min_cell_count < 1:
            raise DomainError(f"min_cell_count must be at least 1, got {self.min_cell_count}")
        if not self.epsilon_nfa > 0:
            raise DomainError(f"epsilon_nfa must be positive, got {self.epsilon_nfa}")
        if not 0 <= self.ratio_threshold <= 1:
            raise DomainError(f"ratio_threshold must be in [0, 1], got {self.ratio_threshold}")
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))


class Decision(str, Enum):
    NORMAL = "normal"
    ABNORMAL = "abnormal"
    INSUFFICIENT_DATA = "insufficient-data"

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class MessageFlag:
    timestamp: int
    cell: Tuple[int, int]
    score: float
    threshold: Optional[float]  # None when the cell is not validated
    abnormal: bool

    @property
    def validated(self) -> bool:
        return self.threshold is not None


@dataclass(frozen=True)
class Verdict:
    track_id: str
    mmsi: int
    t_start: int
    t_end: int
    n: int
    k: int
    nfa: float
    decision: Decision
    mean_score: float
    flags: Tuple[MessageFlag, ...] = field(default_factory=tuple, repr=False)
    watermark: Optional[int] = None

    def as_alert(self) -> dict:
        return {
            "track_id": self.track_id,
            "mmsi": self.mmsi,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "n": self.n,
            "k": self.k,
            "nfa": self.nfa,
            "decision": self.decision.value,
        }
