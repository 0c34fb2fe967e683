import math
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from ..domain.common import AisMessage
from .common import CdfCurve, DomainError, EmptySamplesError, TimingStats

__all__ = ("timing_stats", "unique_mmsi_cdf", "window_counts", "cdf_reading", "capacity_estimate")


def timing_stats(samples: Sequence[float]) -> TimingStats:
    """Population std; quartiles interpolate linearly between order statistics."""
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise EmptySamplesError("no timing samples")
    q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
    return TimingStats(
        mean=float(values.mean()),
        std=float(values.std(ddof=0)),
        min=float(values.min()),
        q1=float(q1),
        median=float(median),
        q3=float(q3),
        max=float(values.max()),
    )


def window_counts(messages: Iterable[AisMessage], window_s: int) -> pd.Series:
    """
    Distinct MMSIs per window. Windows tile time from the first timestamp
    truncated to the window size; empty windows inside the span count 0.
    """
    if not window_s > 0:
        raise DomainError(f"window_s must be positive, got {window_s}")
    frame = pd.DataFrame([(m.timestamp, m.mmsi) for m in messages], columns=["timestamp", "mmsi"])
    if frame.empty:
        return pd.Series([], dtype=int)
    anchor = (frame["timestamp"].min() // window_s) * window_s
    frame["window"] = (frame["timestamp"] - anchor) // window_s
    counts = frame.groupby("window")["mmsi"].nunique()
    return counts.reindex(range(int(counts.index.max()) + 1), fill_value=0)


def unique_mmsi_cdf(messages: Iterable[AisMessage], window_s: int) -> CdfCurve:
    counts = window_counts(messages, window_s)
    if counts.empty:
        return CdfCurve()
    tally = counts.value_counts().sort_index()
    cumulative = tally.cumsum()
    fractions = cumulative / cumulative.iloc[-1]
    return CdfCurve(tuple(zip(tally.index.tolist(), fractions.tolist())))


def cdf_reading(curve: CdfCurve, fraction: float) -> int:
    """Smallest count N such that at least `fraction` of windows have N or fewer MMSIs."""
    if not 0 < fraction <= 1:
        raise DomainError(f"fraction must be in (0, 1], got {fraction}")
    if not curve.points:
        raise EmptySamplesError("empty CDF")
    for count, cumulative in curve.points:
        if cumulative >= fraction:
            return count
    return curve.peak


def capacity_estimate(peak_calls_per_window: float, mean_time_s: float, window_s: float) -> int:
    """Cores needed to run every detection of the busiest window within that window."""
    for name, value in (
        ("peak_calls_per_window", peak_calls_per_window),
        ("mean_time_s", mean_time_s),
        ("window_s", window_s),
    ):
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")
    return max(1, math.ceil(peak_calls_per_window * mean_time_s / window_s))
