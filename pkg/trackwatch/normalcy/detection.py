import math
import numbers

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binom

from ..domain.common import Track
from .common import (
    Aggregation,
    Decision,
    DomainError,
    MessageFlag,
    TrackTooShortError,
    Verdict,
)
from .model import Scorer

__all__ = ("binomial_tail", "detect_track")

MAX_TAIL_N = 10_000


def binomial_tail(n: int, k: int, q: float) -> float:
    """P[X >= k] for X ~ Binomial(n, q), summed in log space."""
    if not all(isinstance(v, numbers.Integral) and not isinstance(v, bool) for v in (n, k)):
        raise DomainError(f"n and k must be integers, got n={n!r}, k={k!r}")
    n, k = int(n), int(k)
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    if n > MAX_TAIL_N:
        raise DomainError(f"n={n} exceeds {MAX_TAIL_N}")
    if not 0 < q < 1:
        raise DomainError(f"q must be in (0, 1), got {q}")

    if k == 0:
        return 1.0
    log_terms = binom.logpmf(np.arange(k, n + 1), n, q)
    return float(min(1.0, math.exp(logsumexp(log_terms))))


def detect_track(
    scorer: Scorer,
    track: Track,
    min_points: int = 1,
    aggregation: Aggregation = Aggregation.NFA,
    ratio_threshold: float = 0.5,
    watermark: int = None,
) -> Verdict:
    """
    Flags each message whose score falls under its cell's threshold (or whose
    cell is not validated) and aggregates the flags into a track decision.

    With the NFA rule the track is abnormal when
    n_validated_cells * P[Binomial(n, q) >= k] < epsilon_nfa. A majority of
    messages in unvalidated cells gives insufficient-data instead.
    """
    n = len(track)
    if n < max(min_points, 1):
        raise TrackTooShortError(f"track {track.track_id} has {n} points, need {min_points}")

    flags = []
    n_unvalidated = 0
    for msg in track.points:
        cell = scorer.cell_of(msg)
        score = scorer.score(msg)
        threshold = scorer.threshold(cell)
        if threshold is None:
            n_unvalidated += 1
            abnormal = True
        else:
            abnormal = score < threshold
        flags.append(MessageFlag(msg.timestamp, cell, score, threshold, abnormal))

    k = sum(flag.abnormal for flag in flags)
    nfa = scorer.n_validated_cells * binomial_tail(n, k, scorer.q)

    if n_unvalidated * 2 > n:
        decision = Decision.INSUFFICIENT_DATA
    elif Aggregation(aggregation) is Aggregation.RATIO:
        decision = Decision.ABNORMAL if k / n > ratio_threshold else Decision.NORMAL
    else:
        decision = Decision.ABNORMAL if nfa < scorer.epsilon_nfa else Decision.NORMAL

    return Verdict(
        track_id=track.track_id,
        mmsi=track.mmsi,
        t_start=track.t_start,
        t_end=track.t_end,
        n=n,
        k=k,
        nfa=nfa,
        decision=decision,
        mean_score=float(np.mean([flag.score for flag in flags])),
        flags=tuple(flags),
        watermark=watermark,
    )
