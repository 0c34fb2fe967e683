import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

__all__ = [
    "TrackwatchError",
    "FieldRangeError",
    "OutOfRoiError",
    "InvalidGridError",
    "Source",
    "AisMessage",
    "Roi",
    "GridConfig",
    "Track",
]

MAX_MMSI = 999_999_999


class TrackwatchError(Exception):
    """Root of every error raised on purpose by trackwatch."""


class FieldRangeError(TrackwatchError, ValueError):
    """A field parsed fine but its value is outside the allowed range."""

    def __init__(self, field: str, value, message: str = None) -> None:
        self.field = field
        self.value = value
        super().__init__(message or f"{field}={value!r} is out of range")


class OutOfRoiError(TrackwatchError, ValueError):
    """A position is outside the region of interest."""


class InvalidGridError(TrackwatchError, ValueError):
    """The discretization grid cannot tile the region of interest."""


class Source(str, Enum):  # str subclassing required for json serialization
    TERRESTRIAL = "terrestrial"
    SATELLITE = "satellite"
    UNKNOWN = "unknown"

    def __repr__(self) -> str:
        return self.name


@dataclass(frozen=True)
class AisMessage:
    """
    One timestamped position report. Ranges are the global ones; membership
    in the region of interest is checked by the preprocessing stage.
    """

    mmsi: int
    timestamp: int
    lat: float
    lon: float
    sog: float
    cog: float
    source: Source = Source.UNKNOWN

    def __post_init__(self):
        for name in ("lat", "lon", "sog", "cog"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("mmsi", "timestamp"):
            value = getattr(self, name)
            if int(value) != value:
                raise FieldRangeError(name, value)
            object.__setattr__(self, name, int(value))

        if not 0 < self.mmsi <= MAX_MMSI:
            raise FieldRangeError("mmsi", self.mmsi)
        if not -90.0 <= self.lat <= 90.0:
            raise FieldRangeError("lat", self.lat)
        if not -180.0 <= self.lon <= 180.0:
            raise FieldRangeError("lon", self.lon)
        if not self.sog >= 0.0:
            raise FieldRangeError("sog", self.sog)
        if not math.isfinite(self.cog):
            raise FieldRangeError("cog", self.cog)

        cog = self.cog % 360.0
        if cog >= 360.0:
            cog = 0.0
        object.__setattr__(self, "cog", cog)
        object.__setattr__(self, "source", Source(self.source))


@dataclass(frozen=True)
class Roi:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not self.lat_min < self.lat_max:
            raise InvalidGridError(f"lat_min {self.lat_min} must be below lat_max {self.lat_max}")
        if not self.lon_min < self.lon_max:
            raise InvalidGridError(f"lon_min {self.lon_min} must be below lon_max {self.lon_max}")

    @classmethod
    def parse(cls, text: str) -> "Roi":
        """`latmin,latmax,lonmin,lonmax` as used on the command line."""
        try:
            lat_min, lat_max, lon_min, lon_max = [float(v) for v in text.split(",")]
        except ValueError:
            raise InvalidGridError(f"ROI must be latmin,latmax,lonmin,lonmax, got {text!r}")
        return cls(lat_min, lat_max, lon_min, lon_max)

    @property
    def lat_span(self) -> float:
        return self.lat_max - self.lat_min

    @property
    def lon_span(self) -> float:
        return self.lon_max - self.lon_min

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max


@dataclass(frozen=True)
class GridConfig:
    cell_size_deg: float = 0.1
    sog_bin_knots: float = 1.0
    sog_cap_knots: float = 30.0
    cog_bin_deg: float = 10.0

    def __post_init__(self):
        if not self.cell_size_deg > 0:
            raise InvalidGridError(f"cell_size_deg must be positive, got {self.cell_size_deg}")
        if not self.sog_bin_knots > 0:
            raise InvalidGridError(f"sog_bin_knots must be positive, got {self.sog_bin_knots}")
        if not self.sog_cap_knots > 0:
            raise InvalidGridError(f"sog_cap_knots must be positive, got {self.sog_cap_knots}")
        if not self.cog_bin_deg > 0:
            raise InvalidGridError(f"cog_bin_deg must be positive, got {self.cog_bin_deg}")
        n_cog = 360.0 / self.cog_bin_deg
        if abs(n_cog - round(n_cog)) > 1e-9:
            raise InvalidGridError(f"cog_bin_deg {self.cog_bin_deg} does not divide 360")

    @property
    def n_sog_bins(self) -> int:
        return _ceil_tolerant(self.sog_cap_knots / self.sog_bin_knots)

    @property
    def n_cog_bins(self) -> int:
        return int(round(360.0 / self.cog_bin_deg))

    @property
    def n_bins(self) -> int:
        return self.n_sog_bins * self.n_cog_bins

    def shape(self, roi: Roi) -> Tuple[int, int]:
        """(rows, cols) of the cell grid laid over `roi`."""
        rows = _ceil_tolerant(roi.lat_span / self.cell_size_deg)
        cols = _ceil_tolerant(roi.lon_span / self.cell_size_deg)
        if rows <= 0 or cols <= 0:
            raise InvalidGridError(f"grid over {roi} is empty")
        return rows, cols

    def n_cells(self, roi: Roi) -> int:
        rows, cols = self.shape(roi)
        return rows * cols


def _ceil_tolerant(x: float) -> int:
    # 2.0 / 0.1 style quotients must not gain a spurious extra cell
    return int(math.ceil(x - 1e-9))


@dataclass(frozen=True)
class Track:
    mmsi: int
    points: Tuple[AisMessage, ...] = field(default_factory=tuple)
    complete: bool = False

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        for a, b in zip(self.points, self.points[1:]):
            if b.timestamp <= a.timestamp:
                raise ValueError(
                    f"track {self.mmsi}: timestamps not increasing ({a.timestamp} -> {b.timestamp})"
                )

    def __len__(self) -> int:
        return len(self.points)

    @property
    def t_start(self) -> int:
        return self.points[0].timestamp

    @property
    def t_end(self) -> int:
        return self.points[-1].timestamp

    @property
    def duration(self) -> int:
        if not self.points:
            return 0
        return self.t_end - self.t_start

    @property
    def track_id(self) -> str:
        return f"{self.mmsi}-{self.t_start}"
