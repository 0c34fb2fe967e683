import math
from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Tuple

import numpy as np
from loguru import logger

from ..domain.common import AisMessage, GridConfig, Roi, Track
from ..domain.grid import cell_index, cell_indices, kinematic_bin, kinematic_bins
from .common import DomainError, EmptyTrainingSetError, NormalcySettings

__all__ = ("Scorer", "NormalcyModel", "fit", "score_message")


class Scorer(Protocol):
    """
    What the detector needs from a normalcy model: a per-message score and a
    per-cell threshold. Any implementation can stand in for the histogram.
    """

    q: float
    epsilon_nfa: float

    def cell_of(self, msg: AisMessage) -> Tuple[int, int]:
        ...

    def score(self, msg: AisMessage) -> float:
        ...

    def threshold(self, cell: Tuple[int, int]) -> Optional[float]:
        ...

    @property
    def n_validated_cells(self) -> int:
        ...


def _log_probability(count: int, total: int, alpha: float, n_bins: int) -> float:
    return math.log((count + alpha) / (total + alpha * n_bins))


@dataclass(eq=False)
class NormalcyModel:
    """
    Per-cell histograms over (sog_bin, cog_bin) with Laplace smoothing.
    `counts` has shape (rows, cols, n_sog_bins, n_cog_bins); `thresholds`
    has shape (rows, cols) and holds NaN for cells that are not validated.
    Immutable once fitted.
    """

    roi: Roi
    grid: GridConfig
    counts: np.ndarray
    thresholds: np.ndarray
    alpha: float = 1.0
    q: float = 0.05
    min_cell_count: int = 50
    epsilon_nfa: float = 1.0

    def __post_init__(self):
        rows, cols = self.grid.shape(self.roi)
        expected = (rows, cols, self.grid.n_sog_bins, self.grid.n_cog_bins)
        if self.counts.shape != expected:
            raise DomainError(f"counts shape {self.counts.shape} does not match grid {expected}")
        if self.thresholds.shape != (rows, cols):
            raise DomainError(f"thresholds shape {self.thresholds.shape} does not match grid {(rows, cols)}")
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        self.thresholds = np.ascontiguousarray(self.thresholds, dtype=np.float64)
        self.counts.setflags(write=False)
        self.thresholds.setflags(write=False)
        self.cell_totals = self.counts.sum(axis=(2, 3))
        self.cell_totals.setflags(write=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NormalcyModel):
            return NotImplemented
        return (
            self.roi == other.roi
            and self.grid == other.grid
            and self.alpha == other.alpha
            and self.q == other.q
            and self.min_cell_count == other.min_cell_count
            and self.epsilon_nfa == other.epsilon_nfa
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.thresholds, other.thresholds, equal_nan=True)
        )

    @property
    def validated(self) -> np.ndarray:
        return ~np.isnan(self.thresholds)

    @property
    def n_validated_cells(self) -> int:
        return int(np.count_nonzero(self.validated))

    def cell_of(self, msg: AisMessage) -> Tuple[int, int]:
        return cell_index(msg, self.roi, self.grid)

    def probabilities(self, cell: Tuple[int, int]) -> np.ndarray:
        """Smoothed (sog_bin, cog_bin) distribution of one cell."""
        return (self.counts[cell] + self.alpha) / (self.cell_totals[cell] + self.alpha * self.grid.n_bins)

    def score(self, msg: AisMessage) -> float:
        return score_message(self, msg)

    def threshold(self, cell: Tuple[int, int]) -> Optional[float]:
        value = self.thresholds[cell]
        return None if math.isnan(value) else float(value)


def score_message(model: NormalcyModel, msg: AisMessage) -> float:
    """log of the smoothed probability of the message's bin in its cell."""
    cell = cell_index(msg, model.roi, model.grid)
    sog_bin, cog_bin = kinematic_bin(msg, model.grid)
    return _log_probability(
        int(model.counts[cell][sog_bin, cog_bin]),
        int(model.cell_totals[cell]),
        model.alpha,
        model.grid.n_bins,
    )


def fit(
    tracks: Iterable[Track],
    roi: Roi,
    grid: GridConfig,
    settings: NormalcySettings = NormalcySettings(),
) -> NormalcyModel:
    """
    Accumulates training messages into per-cell histograms, then sets each
    validated cell's threshold to the lower q-quantile of its own training
    scores.
    """
    points = [p for track in tracks for p in track.points]
    if not points:
        raise EmptyTrainingSetError("no training messages")

    lats = np.array([p.lat for p in points])
    lons = np.array([p.lon for p in points])
    rows, cols = cell_indices(lats, lons, roi, grid)
    sog_bins, cog_bins = kinematic_bins([p.sog for p in points], [p.cog for p in points], grid)

    n_rows, n_cols = grid.shape(roi)
    counts = np.zeros((n_rows, n_cols, grid.n_sog_bins, grid.n_cog_bins), dtype=np.int64)
    np.add.at(counts, (rows, cols, sog_bins, cog_bins), 1)
    totals = counts.sum(axis=(2, 3))

    # score every occupied (cell, bin) once, with the same arithmetic as score_message
    flat_cell = rows * n_cols + cols
    flat_bin = sog_bins * grid.n_cog_bins + cog_bins
    keys, inverse = np.unique(np.stack([flat_cell, flat_bin]), axis=1, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    flat_counts = counts.reshape(n_rows * n_cols, grid.n_bins)
    flat_totals = totals.reshape(-1)
    key_scores = np.array(
        [
            _log_probability(int(flat_counts[c, b]), int(flat_totals[c]), settings.alpha, grid.n_bins)
            for c, b in keys.T
        ]
    )
    scores = key_scores[inverse]

    thresholds = np.full(n_rows * n_cols, np.nan)
    order = np.argsort(flat_cell, kind="stable")
    cells, starts = np.unique(flat_cell[order], return_index=True)
    for cell, cell_scores in zip(cells, np.split(scores[order], starts[1:])):
        if len(cell_scores) >= settings.min_cell_count:
            thresholds[cell] = np.quantile(cell_scores, settings.q, method="lower")

    model = NormalcyModel(
        roi=roi,
        grid=grid,
        counts=counts,
        thresholds=thresholds.reshape(n_rows, n_cols),
        alpha=settings.alpha,
        q=settings.q,
        min_cell_count=settings.min_cell_count,
        epsilon_nfa=settings.epsilon_nfa,
    )
    logger.info(
        f"Fitted normalcy model on {len(points)} messages: "
        f"{int(np.count_nonzero(totals))} occupied cells, {model.n_validated_cells} validated."
    )
    return model
