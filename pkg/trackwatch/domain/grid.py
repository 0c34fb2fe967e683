import math
from typing import Tuple

import numpy as np

from .common import AisMessage, GridConfig, OutOfRoiError, Roi

__all__ = (
    "cell_index",
    "cell_indices",
    "cell_bounds",
    "flat_cell",
    "kinematic_bin",
    "kinematic_bins",
)


def cell_index(msg: AisMessage, roi: Roi, grid: GridConfig) -> Tuple[int, int]:
    """
    (row, col) of the cell holding `msg`. The upper ROI edges are inclusive
    and clamp into the last row/col.
    """
    if not roi.contains(msg.lat, msg.lon):
        raise OutOfRoiError(f"({msg.lat}, {msg.lon}) is outside {roi}")

    rows, cols = grid.shape(roi)
    row = math.floor((msg.lat - roi.lat_min) / grid.cell_size_deg)
    col = math.floor((msg.lon - roi.lon_min) / grid.cell_size_deg)
    return min(row, rows - 1), min(col, cols - 1)


def cell_indices(lats: np.ndarray, lons: np.ndarray, roi: Roi, grid: GridConfig):
    """Vectorised `cell_index`, same arithmetic, for model fitting."""
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    inside = (
        (lats >= roi.lat_min) & (lats <= roi.lat_max) & (lons >= roi.lon_min) & (lons <= roi.lon_max)
    )
    if not np.all(inside):
        raise OutOfRoiError(f"{int(np.count_nonzero(~inside))} positions are outside {roi}")

    rows, cols = grid.shape(roi)
    row = np.floor((lats - roi.lat_min) / grid.cell_size_deg).astype(np.int64)
    col = np.floor((lons - roi.lon_min) / grid.cell_size_deg).astype(np.int64)
    return np.minimum(row, rows - 1), np.minimum(col, cols - 1)


def flat_cell(cell: Tuple[int, int], roi: Roi, grid: GridConfig) -> int:
    _, cols = grid.shape(roi)
    return cell[0] * cols + cell[1]


def cell_bounds(cell: Tuple[int, int], roi: Roi, grid: GridConfig):
    """(lat_lo, lat_hi, lon_lo, lon_hi) of a cell, cut at the ROI edges."""
    row, col = cell
    lat_lo = roi.lat_min + row * grid.cell_size_deg
    lon_lo = roi.lon_min + col * grid.cell_size_deg
    return (
        lat_lo,
        min(lat_lo + grid.cell_size_deg, roi.lat_max),
        lon_lo,
        min(lon_lo + grid.cell_size_deg, roi.lon_max),
    )


def kinematic_bin(msg: AisMessage, grid: GridConfig) -> Tuple[int, int]:
    """(sog_bin, cog_bin); speeds above the cap land in the top bin."""
    sog_bin = min(math.floor(msg.sog / grid.sog_bin_knots), grid.n_sog_bins - 1)
    cog_bin = min(math.floor(msg.cog / grid.cog_bin_deg), grid.n_cog_bins - 1)
    return sog_bin, cog_bin


def kinematic_bins(sogs: np.ndarray, cogs: np.ndarray, grid: GridConfig):
    sogs = np.asarray(sogs, dtype=float)
    cogs = np.asarray(cogs, dtype=float)
    sog_bin = np.minimum(np.floor(sogs / grid.sog_bin_knots).astype(np.int64), grid.n_sog_bins - 1)
    cog_bin = np.minimum(np.floor(cogs / grid.cog_bin_deg).astype(np.int64), grid.n_cog_bins - 1)
    return sog_bin, cog_bin
