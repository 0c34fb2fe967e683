from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Union

import pandas as pd
from loguru import logger

from ..domain.common import AisMessage, Track
from .common import PreprocessConfig, PreprocessCounters, TrackClosed
from .resample import resample
from .tracker import Preprocessor

__all__ = ("BatchResult", "build_tracks", "tracks_to_frame", "write_tracks_csv")

TRACK_COLUMNS = ["track_id", "mmsi", "timestamp", "lat", "lon", "sog", "cog", "source"]


@dataclass
class BatchResult:
    closed: List[TrackClosed] = field(default_factory=list)
    counters: PreprocessCounters = field(default_factory=PreprocessCounters)

    @property
    def tested_tracks(self) -> List[Track]:
        return [event.track for event in self.closed if event.tested]

    def resampled(self, period_s: int) -> List[Track]:
        return [resample(track, period_s) for track in self.tested_tracks]


def build_tracks(messages: Iterable[AisMessage], cfg: PreprocessConfig) -> BatchResult:
    """
    Runs the incremental track builder over a whole file's worth of messages
    (stable-sorted by timestamp first) and closes everything at the end.
    """
    preprocessor = Preprocessor(cfg)
    result = BatchResult(counters=preprocessor.counters)

    for msg in sorted(messages, key=lambda m: m.timestamp):
        result.closed.extend(e for e in preprocessor.process(msg) if isinstance(e, TrackClosed))
    result.closed.extend(preprocessor.flush())

    c = result.counters
    logger.info(
        f"Preprocessed {c.processed} messages ({c.n_dropped} dropped): "
        f"{c.built} tracks built, {c.rejected} rejected, {c.tested} tested."
    )
    return result


def tracks_to_frame(tracks: Iterable[Track]) -> pd.DataFrame:
    rows = [
        (track.track_id, p.mmsi, p.timestamp, p.lat, p.lon, p.sog, p.cog, p.source.value)
        for track in tracks
        for p in track.points
    ]
    return pd.DataFrame(rows, columns=TRACK_COLUMNS)


def write_tracks_csv(tracks: Iterable[Track], path: Union[str, Path]):
    frame = tracks_to_frame(tracks)
    frame.to_csv(path, index=False, float_format="%.9f")
    logger.info(f"Wrote {frame['track_id'].nunique()} tracks ({len(frame)} points) to {path}.")
