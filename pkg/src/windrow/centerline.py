"""Windrow centerline extraction from a height grid.

Each longitudinal row is handled on its own: an adaptive threshold is taken
as the p-quantile of the row's observed cell heights, and the lateral
position is the centroid of the cells above it, weighted by how far they
rise above the threshold. A top-K% selection baseline and a linear
guidance fit sit alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from windrow.grid import HeightGrid


@dataclass(frozen=True)
class CenterlineConfig:
    p: float = 0.5
    min_support: int = 3
    min_height: Optional[float] = 0.10  # None disables the absolute prefilter
    smoothing_window: int = 5
    threshold_scope: str = "row"  # "frame" pools all rows, for comparison only
    lookahead_y: float = 7.0

    def __post_init__(self) -> None:
        errors = []
        if not 0 < self.p < 1:
            errors.append("p")
        if self.min_support < 1:
            errors.append("min_support")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            errors.append("smoothing_window")
        if self.threshold_scope not in ("row", "frame"):
            errors.append("threshold_scope")
        if errors:
            raise ValueError(f"invalid CenterlineConfig fields: {', '.join(errors)}")


@dataclass(frozen=True)
class CenterlinePoint:
    y: float
    x: float  # NaN when not valid
    weight_sum: float
    valid: bool


@dataclass(frozen=True)
class Centerline:
    points: tuple[CenterlinePoint, ...]
    source_sensor: str = ""
    frame_timestamp: int = 0

    def __post_init__(self) -> None:
        ys = [p.y for p in self.points]
        if any(b <= a for a, b in zip(ys, ys[1:])):
            raise ValueError("centerline y values must be strictly increasing")

    @property
    def ys(self) -> np.ndarray:
        return np.array([p.y for p in self.points])

    @property
    def xs(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    @property
    def valid(self) -> np.ndarray:
        return np.array([p.valid for p in self.points], dtype=bool)

    @property
    def n_valid(self) -> int:
        return sum(p.valid for p in self.points)


@dataclass(frozen=True)
class GuidanceTarget:
    lateral_error: float
    heading_error: float
    lookahead_y: float
    valid: bool


def row_threshold(heights: Sequence[float], p: float) -> Optional[float]:
    """p-quantile of observed heights, linear between order statistics at index p*(n-1).

    Returns None for an empty row.
    """
    h = np.sort(np.asarray(heights, dtype=np.float64))
    n = h.size
    if n == 0:
        return None
    pos = p * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(h[lo] + frac * (h[hi] - h[lo]))


def weighted_centroid_row(
    xs: Sequence[float], heights: Sequence[float], threshold: float, min_support: int = 1
) -> Optional[tuple[float, float]]:
    """Height-above-threshold weighted mean of cell positions.

    Only cells strictly above ``threshold`` count. Returns ``(x, weight_sum)``,
    or None when fewer than ``min_support`` cells (and at least one) qualify.
    """
    xs = np.asarray(xs, dtype=np.float64)
    w = np.asarray(heights, dtype=np.float64) - threshold
    above = w > 0
    n_above = int(above.sum())
    if n_above == 0 or n_above < min_support:
        return None
    w = w[above]
    wsum = float(w.sum())
    return float(np.dot(w, xs[above]) / wsum), wsum


def _row_cells(grid: HeightGrid, r: int, min_height: Optional[float]) -> tuple[np.ndarray, np.ndarray]:
    mask = grid.observed[r]
    h = grid.height[r]
    if min_height is not None:
        mask = mask & (h >= min_height)
    return grid.x_centers()[mask], h[mask]


def smooth_centerline(points: Sequence[CenterlinePoint], window: int) -> list[CenterlinePoint]:
    """Moving average over valid neighbours within ``window`` rows; invalid rows stay invalid."""
    points = list(points)
    if window <= 1:
        return points
    half = window // 2
    valid = np.array([p.valid for p in points], dtype=bool)
    xs = np.array([p.x if p.valid else 0.0 for p in points])
    out = []
    for i, p in enumerate(points):
        if not p.valid:
            out.append(p)
            continue
        lo, hi = max(0, i - half), min(len(points), i + half + 1)
        sel = valid[lo:hi]
        out.append(CenterlinePoint(p.y, float(xs[lo:hi][sel].mean()), p.weight_sum, True))
    return out


def _invalid(y: float) -> CenterlinePoint:
    return CenterlinePoint(float(y), math.nan, 0.0, False)


def extract_centerline(
    grid: HeightGrid, cfg: CenterlineConfig = CenterlineConfig(), sensor: str = "", t_ns: int = 0
) -> Centerline:
    ys = grid.y_centers()
    rows = [_row_cells(grid, r, cfg.min_height) for r in range(grid.rows)]

    frame_thr = None
    if cfg.threshold_scope == "frame":
        pooled = np.concatenate([h for _, h in rows]) if rows else np.empty(0)
        frame_thr = row_threshold(pooled, cfg.p)

    points = []
    for r, (xs, hs) in enumerate(rows):
        thr = frame_thr if cfg.threshold_scope == "frame" else row_threshold(hs, cfg.p)
        res = None if thr is None else weighted_centroid_row(xs, hs, thr, cfg.min_support)
        if res is None:
            points.append(_invalid(ys[r]))
        else:
            points.append(CenterlinePoint(float(ys[r]), res[0], res[1], True))
    points = smooth_centerline(points, cfg.smoothing_window)
    return Centerline(tuple(points), sensor, t_ns)


def topk_centerline(
    grid: HeightGrid,
    k_fraction: float,
    cfg: CenterlineConfig = CenterlineConfig(),
    sensor: str = "",
    t_ns: int = 0,
) -> Centerline:
    """Baseline: unweighted mean x of the ceil(k*n) highest observed cells per row.

    Ties are broken toward smaller |x|, then smaller x.
    """
    if not 0 < k_fraction <= 1:
        raise ValueError(f"k_fraction must be in (0, 1], got {k_fraction}")
    ys = grid.y_centers()
    points = []
    for r in range(grid.rows):
        xs, hs = _row_cells(grid, r, cfg.min_height)
        n = xs.size
        if n == 0:
            points.append(_invalid(ys[r]))
            continue
        k = min(n, math.ceil(k_fraction * n))
        order = np.lexsort((xs, np.abs(xs), -hs))[:k]
        points.append(CenterlinePoint(float(ys[r]), float(xs[order].mean()), float(k), True))
    points = smooth_centerline(points, cfg.smoothing_window)
    return Centerline(tuple(points), sensor, t_ns)


def guidance_target(cl: Centerline, lookahead_y: float) -> GuidanceTarget:
    """Least-squares line x = a + b*y through valid points, evaluated at ``lookahead_y``."""
    ys = cl.ys
    if ys.size >= 2:
        half = 0.5 * (ys[1] - ys[0])
        if not ys[0] - half - 1e-9 <= lookahead_y <= ys[-1] + half + 1e-9:
            raise ValueError(f"lookahead {lookahead_y} m outside the grid span")
    valid = cl.valid
    if valid.sum() < 2:
        return GuidanceTarget(math.nan, math.nan, lookahead_y, False)
    y = cl.ys[valid]
    x = cl.xs[valid]
    ym = y.mean()
    dy = y - ym
    b = float(np.dot(dy, x - x.mean()) / np.dot(dy, dy))
    a = float(x.mean() - b * ym)
    return GuidanceTarget(a + b * lookahead_y, math.atan(b), lookahead_y, True)
