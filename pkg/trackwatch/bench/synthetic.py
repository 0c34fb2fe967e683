"""
Parametric lane traffic for benchmarks and detection-quality checks.

Geometry is worked out per lane in a local equirectangular frame measured
in nautical miles (north, east), with east scaled by the cosine of the
lane's mean latitude, so a lane segment is a straight line in both the
frame and in (lat, lon).
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from loguru import logger

from ..domain.common import AisMessage, FieldRangeError, Source
from .common import AnomalyKind, Lane, ScenarioError, SyntheticScenario

__all__ = ("VesselTruth", "SyntheticTraffic", "simulate", "generate", "write_ground_truth")

FIRST_MMSI = 200_000_000
NM_PER_DEG = 60.0
DIFF_STEP_S = 5.0


@dataclass(frozen=True)
class VesselTruth:
    mmsi: int
    lane: int
    anomaly: Optional[AnomalyKind]
    t_start: int
    t_end: int
    anomaly_start: Optional[int] = None

    @property
    def track_id(self) -> str:
        return f"{self.mmsi}-{self.t_start}"

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


@dataclass
class SyntheticTraffic:
    messages: List[AisMessage]
    vessels: List[VesselTruth]

    @property
    def anomalous(self) -> List[VesselTruth]:
        return [v for v in self.vessels if v.anomaly is not None]

    @property
    def clean(self) -> List[VesselTruth]:
        return [v for v in self.vessels if v.anomaly is None]

    def n_tracks_at_least(self, min_duration_s: int) -> int:
        return sum(v.duration >= min_duration_s for v in self.vessels)


class _LaneFrame:
    def __init__(self, lane: Lane, reverse: bool) -> None:
        waypoints = np.array(lane.waypoints[::-1] if reverse else lane.waypoints, dtype=float)
        self.cos_lat = math.cos(math.radians(waypoints[:, 0].mean()))
        self.north = waypoints[:, 0] * NM_PER_DEG
        self.east = waypoints[:, 1] * NM_PER_DEG * self.cos_lat
        d_north = np.diff(self.north)
        d_east = np.diff(self.east)
        lengths = np.hypot(d_north, d_east)
        self.tangents = np.stack([d_north / lengths, d_east / lengths], axis=1)
        self.normals = np.stack([self.tangents[:, 1], -self.tangents[:, 0]], axis=1)
        self.cumulative = np.concatenate([[0.0], np.cumsum(lengths)])

    @property
    def length_nm(self) -> float:
        return float(self.cumulative[-1])

    def at(self, s: np.ndarray):
        """Point, unit tangent and unit normal at along-track distances `s`."""
        segment = np.clip(np.searchsorted(self.cumulative, s, side="right") - 1, 0, len(self.tangents) - 1)
        point = np.stack([np.interp(s, self.cumulative, self.north), np.interp(s, self.cumulative, self.east)], axis=1)
        return point, self.tangents[segment], self.normals[segment]

    def to_degrees(self, position: np.ndarray):
        return position[:, 0] / NM_PER_DEG, position[:, 1] / (NM_PER_DEG * self.cos_lat)


@dataclass
class _Voyage:
    frame: _LaneFrame
    depart: float
    speed_knots: float
    offset_nm: float
    anomaly: Optional[AnomalyKind]
    anomaly_start: float
    anomaly_duration: float
    off_lane_nm: float

    @property
    def pause(self) -> float:
        return self.anomaly_duration if self.anomaly in (AnomalyKind.LOOP, AnomalyKind.STOP) else 0.0

    @property
    def sailing_time(self) -> float:
        return self.frame.length_nm / self.speed_knots * 3600.0

    def _active(self, t: np.ndarray) -> np.ndarray:
        return (t >= self.anomaly_start) & (t < self.anomaly_start + self.anomaly_duration)

    def along(self, t: np.ndarray) -> np.ndarray:
        """Along-track distance in nautical miles; loops and stops hold it still."""
        t = np.asarray(t, dtype=float)
        elapsed = t - self.depart
        if self.pause:
            held = self.anomaly_start - self.depart
            elapsed = np.where(t < self.anomaly_start, elapsed, np.where(self._active(t), held, elapsed - self.pause))
        return np.clip(elapsed * self.speed_knots / 3600.0, 0.0, self.frame.length_nm)

    def positions(self, t: np.ndarray) -> np.ndarray:
        """Noise-free (north, east) in nautical miles at times `t`."""
        t = np.asarray(t, dtype=float)
        active = self._active(t)
        phase = (t - self.anomaly_start) / self.anomaly_duration
        s = self.along(t)
        point, tangent, normal = self.frame.at(s)
        lateral = np.full(len(t), self.offset_nm)
        if self.anomaly is AnomalyKind.OFF_LANE:
            lateral = lateral + np.where(active, self.off_lane_nm * np.sin(np.pi * phase), 0.0)
        position = point + normal * lateral[:, None]

        if self.anomaly is AnomalyKind.LOOP:
            radius = self.speed_knots * self.anomaly_duration / 3600.0 / (2 * np.pi)
            theta = 2 * np.pi * phase
            circle = normal * (radius * (1 - np.cos(theta)))[:, None] + tangent * (radius * np.sin(theta))[:, None]
            position = position + np.where(active[:, None], circle, 0.0)
        return position

    def kinematics(self, t: np.ndarray):
        """(sog knots, cog degrees) from a central difference of the path."""
        step = self.positions(t + DIFF_STEP_S) - self.positions(t - DIFF_STEP_S)
        sog = np.hypot(step[:, 0], step[:, 1]) / (2 * DIFF_STEP_S) * 3600.0
        cog = np.degrees(np.arctan2(step[:, 1], step[:, 0])) % 360.0
        return sog, cog


def _assign_anomalies(scenario: SyntheticScenario, rng: np.random.Generator) -> List[Optional[AnomalyKind]]:
    kinds: List[Optional[AnomalyKind]] = [None] * scenario.n_vessels
    order = rng.permutation(scenario.n_vessels)
    position = 0
    for injection in scenario.anomalies:
        count = int(round(injection.fraction * scenario.n_vessels))
        for vessel in order[position : position + count]:
            kinds[vessel] = injection.kind
        position += count
    return kinds


def simulate(scenario: SyntheticScenario) -> SyntheticTraffic:
    """Messages sorted by (timestamp, mmsi) plus per-vessel ground truth."""
    rng = np.random.default_rng(scenario.seed)
    kinds = _assign_anomalies(scenario, rng)
    end_of_scenario = scenario.start_time + scenario.duration_s

    messages: List[AisMessage] = []
    vessels: List[VesselTruth] = []
    for i in range(scenario.n_vessels):
        lane_index = i % len(scenario.lanes)
        lane = scenario.lanes[lane_index]
        frame = _LaneFrame(lane, reverse=(i // len(scenario.lanes)) % 2 == 1)
        mmsi = FIRST_MMSI + i

        speed = max(1.0, lane.speed_knots + rng.normal(0.0, scenario.speed_sigma_knots))
        voyage = _Voyage(
            frame=frame,
            depart=0.0,
            speed_knots=speed,
            offset_nm=rng.normal(0.0, scenario.cross_track_sigma_nm),
            anomaly=kinds[i],
            anomaly_start=math.inf,
            anomaly_duration=float(scenario.anomaly_duration_s),
            off_lane_nm=scenario.off_lane_nm,
        )
        route_time = voyage.sailing_time + voyage.pause
        voyage.depart = float(
            scenario.start_time + int(rng.uniform(0.0, max(0.0, scenario.duration_s - route_time)))
        )
        if voyage.anomaly is not None:
            voyage.anomaly_start = voyage.depart + rng.uniform(0.3, 0.5) * voyage.sailing_time
        end = min(voyage.depart + route_time, end_of_scenario)

        n_max = int((end - voyage.depart) // (scenario.report_period_s - scenario.jitter_s)) + 2
        steps = scenario.report_period_s + rng.integers(-scenario.jitter_s, scenario.jitter_s + 1, size=n_max)
        times = voyage.depart + np.concatenate([[0], np.cumsum(steps)])
        times = times[times <= end]

        position = voyage.positions(times)
        sog, cog = voyage.kinematics(times)
        _, _, normal = frame.at(voyage.along(times))
        position = position + normal * rng.normal(0.0, scenario.cross_track_sigma_nm / 4, size=len(times))[:, None]
        sog = np.maximum(0.0, sog + rng.normal(0.0, scenario.speed_sigma_knots / 2, size=len(times)))
        cog = (cog + rng.normal(0.0, scenario.course_sigma_deg, size=len(times))) % 360.0
        satellite = rng.random(len(times)) < scenario.satellite_fraction
        lats, lons = frame.to_degrees(position)

        try:
            for k in range(len(times)):
                messages.append(
                    AisMessage(
                        mmsi=mmsi,
                        timestamp=int(times[k]),
                        lat=float(lats[k]),
                        lon=float(lons[k]),
                        sog=float(sog[k]),
                        cog=float(cog[k]),
                        source=Source.SATELLITE if satellite[k] else Source.TERRESTRIAL,
                    )
                )
        except FieldRangeError as e:
            raise ScenarioError(f"vessel {mmsi} on lane {lane_index} leaves the globe: {e}")

        vessels.append(
            VesselTruth(
                mmsi=mmsi,
                lane=lane_index,
                anomaly=voyage.anomaly,
                t_start=int(times[0]),
                t_end=int(times[-1]),
                anomaly_start=int(voyage.anomaly_start) if voyage.anomaly is not None else None,
            )
        )

    messages.sort(key=lambda m: (m.timestamp, m.mmsi))
    logger.info(
        f"Generated {len(messages)} messages from {scenario.n_vessels} vessels "
        f"({sum(k is not None for k in kinds)} anomalous)."
    )
    return SyntheticTraffic(messages=messages, vessels=vessels)


def write_ground_truth(traffic: SyntheticTraffic, path: Union[str, Path]):
    """`track_id,anomaly_type` for every injected anomaly."""
    frame = pd.DataFrame(
        [(v.track_id, v.anomaly.value) for v in traffic.anomalous],
        columns=["track_id", "anomaly_type"],
    )
    frame.to_csv(path, index=False)


def generate(scenario: SyntheticScenario, ground_truth_path: Union[str, Path, None] = None) -> List[AisMessage]:
    traffic = simulate(scenario)
    if ground_truth_path is not None:
        write_ground_truth(traffic, ground_truth_path)
    return traffic.messages
