import math
import pickle
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

from loguru import logger

from ..domain.common import AisMessage, Track
from .common import (
    DetectionDue,
    DropReason,
    PreprocessConfig,
    PreprocessCounters,
    TrackClosed,
    TrackExtended,
    TrackOpened,
)
from .resample import resample

__all__ = (
    "OperatorState",
    "validate",
    "ingest_message",
    "flush",
    "Preprocessor",
)

Event = Union[TrackOpened, TrackExtended, TrackClosed, DetectionDue]


@dataclass
class OperatorState:
    """
    Open track buffers for the MMSIs owned by one operator. Single writer:
    only the owning replica mutates it.
    """

    open_tracks: Dict[int, List[AisMessage]] = field(default_factory=dict)
    last_seen: Dict[int, int] = field(default_factory=dict)
    triggered_at: Dict[int, int] = field(default_factory=dict)  # duration at last DetectionDue

    def __len__(self) -> int:
        return len(self.open_tracks)

    def extract(self, owns: Callable[[int], bool]) -> "OperatorState":
        """Removes and returns the slice of MMSIs for which `owns(mmsi)` holds."""
        moved = OperatorState()
        for mmsi in [m for m in self.last_seen if owns(m)]:
            moved.last_seen[mmsi] = self.last_seen.pop(mmsi)
            if mmsi in self.open_tracks:
                moved.open_tracks[mmsi] = self.open_tracks.pop(mmsi)
            if mmsi in self.triggered_at:
                moved.triggered_at[mmsi] = self.triggered_at.pop(mmsi)
        return moved

    def merge(self, other: "OperatorState"):
        overlap = set(self.last_seen) & set(other.last_seen)
        if overlap:
            raise ValueError(f"states overlap on MMSIs {sorted(overlap)[:5]}")
        self.open_tracks.update(other.open_tracks)
        self.last_seen.update(other.last_seen)
        self.triggered_at.update(other.triggered_at)

    def to_bytes(self) -> bytes:
        return pickle.dumps(
            (self.open_tracks, self.last_seen, self.triggered_at), protocol=pickle.HIGHEST_PROTOCOL
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "OperatorState":
        open_tracks, last_seen, triggered_at = pickle.loads(data)
        return cls(open_tracks=open_tracks, last_seen=last_seen, triggered_at=triggered_at)


def validate(
    msg: AisMessage, cfg: PreprocessConfig, last_seen: Optional[int] = None
) -> Optional[DropReason]:
    """None means keep; otherwise the reason the message is dropped."""
    if not cfg.roi.contains(msg.lat, msg.lon):
        return DropReason.OUT_OF_ROI
    if msg.sog > cfg.max_sog_knots:
        return DropReason.OVER_SPEED
    if last_seen is not None:
        if msg.timestamp == last_seen:
            return DropReason.DUPLICATE_TIME
        if msg.timestamp < last_seen:
            return DropReason.NON_MONOTONE_TIME
    return None


def _close(state: OperatorState, mmsi: int, cfg: PreprocessConfig) -> TrackClosed:
    points = state.open_tracks.pop(mmsi)
    state.triggered_at.pop(mmsi, None)
    track = Track(mmsi=mmsi, points=tuple(points), complete=True)
    return TrackClosed(track=track, tested=track.duration >= cfg.min_track_duration_s)


def ingest_message(state: OperatorState, msg: AisMessage, cfg: PreprocessConfig) -> List[Event]:
    """Adds an already validated message to its MMSI's open track."""
    events: List[Event] = []
    buffer = state.open_tracks.get(msg.mmsi)

    if buffer and msg.timestamp - buffer[-1].timestamp > cfg.gap_threshold_s:
        events.append(_close(state, msg.mmsi, cfg))
        buffer = None

    if buffer is None:
        buffer = state.open_tracks[msg.mmsi] = [msg]
        events.append(TrackOpened(mmsi=msg.mmsi, track_id=f"{msg.mmsi}-{msg.timestamp}"))
    else:
        buffer.append(msg)
        events.append(
            TrackExtended(mmsi=msg.mmsi, track_id=f"{msg.mmsi}-{buffer[0].timestamp}", n_points=len(buffer))
        )
    state.last_seen[msg.mmsi] = msg.timestamp

    duration = msg.timestamp - buffer[0].timestamp
    last_trigger = state.triggered_at.get(msg.mmsi)
    if (last_trigger is None and duration >= cfg.min_track_duration_s) or (
        last_trigger is not None and duration - last_trigger >= cfg.redetect_period_s
    ):
        state.triggered_at[msg.mmsi] = duration
        track = resample(Track(mmsi=msg.mmsi, points=tuple(buffer)), cfg.resample_period_s)
        events.append(DetectionDue(track=track, track_id=track.track_id, watermark=msg.timestamp))

    return events


def flush(state: OperatorState, now: float, cfg: PreprocessConfig) -> List[TrackClosed]:
    """
    Closes every open track idle for longer than the gap threshold at `now`.

    A closed MMSI keeps its timestamp watermark, so late reports older than
    its last track are still dropped. Watermarks of MMSIs without an open
    track are forgotten once they lag `now` by twice the gap threshold.
    """
    closed = []
    for mmsi in sorted(state.open_tracks):
        if now - state.open_tracks[mmsi][-1].timestamp > cfg.gap_threshold_s:
            closed.append(_close(state, mmsi, cfg))
    horizon = now - 2 * cfg.gap_threshold_s
    for mmsi in [m for m, t in state.last_seen.items() if m not in state.open_tracks and t < horizon]:
        del state.last_seen[mmsi]
    return closed


class Preprocessor:
    """
    Validation plus incremental track building for one state, with the
    processed/kept/dropped and built/rejected/tested tallies.
    """

    def __init__(self, cfg: PreprocessConfig, state: OperatorState = None) -> None:
        self.cfg = cfg
        self.state = state if state is not None else OperatorState()
        self.counters = PreprocessCounters()

    def process(self, msg: AisMessage) -> List[Event]:
        reason = validate(msg, self.cfg, self.state.last_seen.get(msg.mmsi))
        self.counters.count_message(reason)
        if reason is not None:
            logger.debug(f"Dropped {msg.mmsi}@{msg.timestamp}: {reason.value}")
            return []

        events = ingest_message(self.state, msg, self.cfg)
        for event in events:
            if isinstance(event, TrackClosed):
                self.counters.count_closed(event)
        return events

    def flush(self, now: float = math.inf) -> List[TrackClosed]:
        closed = flush(self.state, now, self.cfg)
        for event in closed:
            self.counters.count_closed(event)
        return closed
