import json
import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import pandas as pd
import toml

from ..domain.common import TrackwatchError
from ..normalcy.common import DomainError

__all__ = [
    "TimingStats",
    "CdfCurve",
    "Lane",
    "AnomalyKind",
    "AnomalyInjection",
    "SyntheticScenario",
    "BenchReport",
    "EmptySamplesError",
    "ScenarioError",
    "DomainError",
]

TIMING_FIELDS = ("mean", "std", "min", "q1", "median", "q3", "max")


class EmptySamplesError(TrackwatchError, ValueError):
    """Statistics over zero samples."""


class ScenarioError(TrackwatchError, ValueError):
    """A synthetic scenario is not valid."""


@dataclass(frozen=True)
class TimingStats:
    """Seconds per detection call."""

    mean: float
    std: float
    min: float
    q1: float
    median: float
    q3: float
    max: float

    def __post_init__(self):
        if not self.min <= self.q1 <= self.median <= self.q3 <= self.max:
            raise ValueError(f"quantiles out of order: {self}")
        if self.std < 0:
            raise ValueError(f"negative std {self.std}")


@dataclass(frozen=True)
class CdfCurve:
    """(unique MMSI count, fraction of windows with at most that count), sorted by count."""

    points: Tuple[Tuple[int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((int(c), float(f)) for c, f in self.points))
        counts = [c for c, _ in self.points]
        fractions = [f for _, f in self.points]
        if counts != sorted(set(counts)):
            raise ValueError("CDF counts must be strictly increasing")
        if any(b < a for a, b in zip(fractions, fractions[1:])):
            raise ValueError("CDF fractions must be non-decreasing")
        if fractions and fractions[-1] != 1.0:
            raise ValueError(f"CDF must end at 1, ends at {fractions[-1]}")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def peak(self) -> int:
        return self.points[-1][0] if self.points else 0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(list(self.points), columns=["unique_mmsi", "fraction"])


@dataclass(frozen=True)
class Lane:
    """Polyline of (lat, lon) waypoints sailed at `speed_knots`."""

    waypoints: Tuple[Tuple[float, float], ...]
    speed_knots: float

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple((float(a), float(b)) for a, b in self.waypoints))
        if len(self.waypoints) < 2:
            raise ScenarioError(f"a lane needs at least two waypoints, got {len(self.waypoints)}")
        if any(a == b for a, b in zip(self.waypoints, self.waypoints[1:])):
            raise ScenarioError("consecutive lane waypoints coincide")
        if not self.speed_knots > 0:
            raise ScenarioError(f"lane speed must be positive, got {self.speed_knots}")


class AnomalyKind(str, Enum):
    LOOP = "loop"
    STOP = "stop"
    OFF_LANE = "off-lane"


@dataclass(frozen=True)
class AnomalyInjection:
    kind: AnomalyKind
    fraction: float

    def __post_init__(self):
        object.__setattr__(self, "kind", AnomalyKind(self.kind))
        if not 0 <= self.fraction <= 1:
            raise ScenarioError(f"anomaly fraction must be in [0, 1], got {self.fraction}")


@dataclass(frozen=True)
class SyntheticScenario:
    """
    Vessels are assigned to lanes in turn and alternate sailing direction on
    each lane. Departures are spread over `duration_s` so that every route
    fits inside it when it can. Noise sigmas of zero give exact lane
    following; `jitter_s` perturbs the report period uniformly.
    """

    lanes: Tuple[Lane, ...]
    n_vessels: int = 0
    duration_s: int = 86_400
    start_time: int = 1_600_000_000
    report_period_s: int = 60
    jitter_s: int = 5
    cross_track_sigma_nm: float = 0.2
    speed_sigma_knots: float = 0.3
    course_sigma_deg: float = 2.0
    anomalies: Tuple[AnomalyInjection, ...] = ()
    anomaly_duration_s: int = 7_200
    off_lane_nm: float = 15.0
    satellite_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lanes", tuple(l if isinstance(l, Lane) else Lane(**l) for l in self.lanes))
        object.__setattr__(
            self,
            "anomalies",
            tuple(a if isinstance(a, AnomalyInjection) else AnomalyInjection(**a) for a in self.anomalies),
        )
        if self.n_vessels < 0:
            raise ScenarioError(f"n_vessels must be non-negative, got {self.n_vessels}")
        if self.n_vessels and not self.lanes:
            raise ScenarioError("vessels need at least one lane")
        if self.duration_s <= 0 or self.report_period_s <= 0 or self.anomaly_duration_s <= 0:
            raise ScenarioError("durations and the report period must be positive")
        if not 0 <= self.jitter_s < self.report_period_s:
            raise ScenarioError(f"jitter_s must be in [0, report_period_s), got {self.jitter_s}")
        for name in ("cross_track_sigma_nm", "speed_sigma_knots", "course_sigma_deg", "off_lane_nm"):
            if getattr(self, name) < 0:
                raise ScenarioError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0 <= self.satellite_fraction <= 1:
            raise ScenarioError(f"satellite_fraction must be in [0, 1], got {self.satellite_fraction}")
        if sum(a.fraction for a in self.anomalies) > 1:
            raise ScenarioError("anomaly fractions sum above 1")

    @classmethod
    def from_config(cls, path: Union[str, Path]) -> "SyntheticScenario":
        """Top-level keys map onto fields; `[[lanes]]` and `[[anomalies]]` are tables."""
        with open(path, "r") as f:
            raw = toml.load(f)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as e:
            raise ScenarioError(str(e))


class _Encoder(json.JSONEncoder):
    def default(self, o):
        if isinstance(o, Enum):
            return o.value
        return super().default(o)


@dataclass(frozen=True)
class BenchReport:
    """`timing` is None when no track reached the minimum duration."""

    replicas: int
    timing: Optional[TimingStats]
    cdf: CdfCurve
    window_s: int
    peak_unique_mmsi: int
    capacity_cores: int
    built: int
    rejected: int
    tested: int
    n_messages: int
    n_detections: int
    wall_time_s: float
    throughput: float
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchReport":
        data = dict(data)
        data["timing"] = TimingStats(**data["timing"]) if data["timing"] is not None else None
        data["cdf"] = CdfCurve(tuple(tuple(p) for p in data["cdf"]["points"]))
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), cls=_Encoder, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        return cls.from_dict(json.loads(text))

    def _scalar_row(self) -> dict:
        row = {name: getattr(self.timing, name) if self.timing is not None else math.nan for name in TIMING_FIELDS}
        for f in fields(self):
            if f.name not in ("timing", "cdf", "extras"):
                row[f.name] = getattr(self, f.name)
        return row

    def write(self, directory: Union[str, Path], stem: Optional[str] = None) -> List[Path]:
        """Writes `<stem>.json`, `<stem>.csv` and the two-column `<stem>-cdf.csv`."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or "report"
        json_path = directory / f"{stem}.json"
        csv_path = directory / f"{stem}.csv"
        cdf_path = directory / f"{stem}-cdf.csv"
        json_path.write_text(self.to_json())
        pd.DataFrame([self._scalar_row()]).to_csv(csv_path, index=False)
        self.cdf.to_frame().to_csv(cdf_path, index=False)
        return [json_path, csv_path, cdf_path]

    @classmethod
    def read_csv(cls, csv_path: Union[str, Path], cdf_path: Union[str, Path]) -> "BenchReport":
        row = pd.read_csv(csv_path, float_precision="round_trip").iloc[0].to_dict()
        cdf = pd.read_csv(cdf_path, float_precision="round_trip")
        values = {name: float(row.pop(name)) for name in TIMING_FIELDS}
        timing = None if all(math.isnan(v) for v in values.values()) else TimingStats(**values)
        floats = {"wall_time_s", "throughput"}
        scalars = {k: (float(v) if k in floats else int(v)) for k, v in row.items()}
        return cls(
            timing=timing,
            cdf=CdfCurve(tuple(zip(cdf["unique_mmsi"].tolist(), cdf["fraction"].tolist()))),
            **scalars,
        )
