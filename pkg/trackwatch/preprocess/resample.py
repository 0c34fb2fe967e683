import numpy as np

from ..domain.common import AisMessage, Track
from .common import TooFewPointsError

__all__ = ("resample",)


def resample(track: Track, period_s: int) -> Track:
    """
    Puts `track` on the grid t0, t0 + period, ... (up to the last original
    timestamp). lat, lon and sog are linearly interpolated, cog follows the
    shortest arc. Grid times that hit an original report copy it unchanged.
    """
    if len(track) < 2:
        raise TooFewPointsError(f"track {track.track_id} has {len(track)} point(s)")

    points = track.points
    ts = np.array([p.timestamp for p in points], dtype=np.int64)
    lats = np.array([p.lat for p in points])
    lons = np.array([p.lon for p in points])
    sogs = np.array([p.sog for p in points])
    cogs = np.unwrap(np.array([p.cog for p in points]), period=360.0)

    grid = np.arange(ts[0], ts[-1] + 1, period_s, dtype=np.int64)
    # rounding must not push a point past the ROI edge the originals respect
    lat_i = np.clip(np.interp(grid, ts, lats), lats.min(), lats.max())
    lon_i = np.clip(np.interp(grid, ts, lons), lons.min(), lons.max())
    sog_i = np.clip(np.interp(grid, ts, sogs), 0.0, None)
    cog_i = np.mod(np.interp(grid, ts, cogs), 360.0)

    left = np.clip(np.searchsorted(ts, grid, side="right") - 1, 0, len(ts) - 1)
    on_report = ts[left] == grid

    resampled = []
    for i, t in enumerate(grid):
        original = points[left[i]]
        if on_report[i]:
            resampled.append(original)
            continue
        resampled.append(
            AisMessage(
                mmsi=track.mmsi,
                timestamp=int(t),
                lat=float(lat_i[i]),
                lon=float(lon_i[i]),
                sog=float(sog_i[i]),
                cog=float(cog_i[i]),
                source=original.source,
            )
        )
    return Track(mmsi=track.mmsi, points=tuple(resampled), complete=track.complete)
