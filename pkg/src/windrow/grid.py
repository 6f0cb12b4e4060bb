"""Rasterisation of a frame into a 2-D height grid over the forward ROI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from windrow.frame_io import Z_SANITY_FLOOR, PointCloudFrame


@dataclass(frozen=True)
class GridConfig:
    y_min: float = 4.0
    y_max: float = 10.0
    x_half_width: float = 2.0
    cell_dy: float = 0.10
    cell_dx: float = 0.05
    min_cell_points: int = 1
    statistic: str = "max"  # or "mean", for ablation
    ground_compensation: bool = False
    ground_quantile: float = 0.05

    def __post_init__(self) -> None:
        errors = []
        if not self.y_min < self.y_max:
            errors.append("y_min/y_max")
        if not self.cell_dx > 0:
            errors.append("cell_dx")
        if not self.cell_dy > 0:
            errors.append("cell_dy")
        if not self.x_half_width > 0:
            errors.append("x_half_width")
        if self.min_cell_points < 1:
            errors.append("min_cell_points")
        if self.statistic not in ("max", "mean"):
            errors.append("statistic")
        if not 0 < self.ground_quantile <= 0.5:
            errors.append("ground_quantile")
        if not errors and (self.rows < 1 or self.cols < 1):
            errors.append("cell size larger than ROI")
        if errors:
            raise ValueError(f"invalid GridConfig fields: {', '.join(errors)}")

    @property
    def rows(self) -> int:
        return int(round((self.y_max - self.y_min) / self.cell_dy))

    @property
    def cols(self) -> int:
        return int(round(2 * self.x_half_width / self.cell_dx))

    def y_centers(self) -> np.ndarray:
        return self.y_min + (np.arange(self.rows) + 0.5) * self.cell_dy

    def x_centers(self) -> np.ndarray:
        # symmetric about x = 0 so mirrored cells have bit-equal |x|
        return (np.arange(self.cols) + 0.5 - self.cols / 2) * self.cell_dx


@dataclass(frozen=True)
class HeightGrid:
    """Per-cell height and point count. Unobserved cells hold NaN height and count 0."""

    height: np.ndarray  # (rows, cols)
    count: np.ndarray  # (rows, cols) int
    config: GridConfig

    @property
    def rows(self) -> int:
        return self.height.shape[0]

    @property
    def cols(self) -> int:
        return self.height.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.count >= self.config.min_cell_points

    def y_centers(self) -> np.ndarray:
        return self.config.y_centers()

    def x_centers(self) -> np.ndarray:
        return self.config.x_centers()

    def with_height(self, height: np.ndarray) -> "HeightGrid":
        return HeightGrid(np.asarray(height, dtype=np.float64), self.count, self.config)


def roi_mask(points: np.ndarray, cfg: GridConfig) -> np.ndarray:
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return (y >= cfg.y_min) & (y < cfg.y_max) & (np.abs(x) < cfg.x_half_width) & (z >= Z_SANITY_FLOOR)


def cell_indices(points: np.ndarray, cfg: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    # half-open [lo, hi) bins; clip guards float rounding at the upper edge
    r = np.floor((points[:, 1] - cfg.y_min) / cfg.cell_dy).astype(np.intp)
    c = np.floor((points[:, 0] + cfg.x_half_width) / cfg.cell_dx).astype(np.intp)
    np.clip(r, 0, cfg.rows - 1, out=r)
    np.clip(c, 0, cfg.cols - 1, out=c)
    return r, c


def rasterize(frame: PointCloudFrame, cfg: GridConfig, z_offset: float = 0.0) -> HeightGrid:
    """Bin ROI points into cells, keeping max (or mean) height and point count.

    ``z_offset`` is subtracted from every height before binning.
    """
    rows, cols = cfg.rows, cfg.cols
    pts = frame.points
    pts = pts[roi_mask(pts, cfg)]
    r, c = cell_indices(pts, cfg)
    flat = r * cols + c
    z = pts[:, 2] - z_offset if z_offset else pts[:, 2]

    count = np.bincount(flat, minlength=rows * cols)
    if cfg.statistic == "max":
        height = np.full(rows * cols, -np.inf)
        np.maximum.at(height, flat, z)
    else:
        sums = np.bincount(flat, weights=z, minlength=rows * cols)
        with np.errstate(invalid="ignore", divide="ignore"):
            height = sums / count
    observed = count >= cfg.min_cell_points
    height = np.where(observed, height, np.nan)
    return HeightGrid(height.reshape(rows, cols), count.reshape(rows, cols), cfg)


def ground_offset(frame: PointCloudFrame, quantile: float, cfg: GridConfig | None = None) -> float:
    """Return the ``quantile`` of z over ROI points, an estimate of the ground level."""
    if not 0 < quantile <= 0.5:
        raise ValueError(f"quantile must be in (0, 0.5], got {quantile}")
    cfg = cfg or GridConfig()
    z = frame.points[roi_mask(frame.points, cfg), 2]
    if z.size == 0:
        raise ValueError("no points for ground estimate")
    return float(np.quantile(z, quantile))


def dump_grid_csv(grid: HeightGrid, path) -> None:
    """Debug dump of the height matrix, -1 marking unobserved cells."""
    out = np.where(grid.observed, grid.height, -1.0)
    np.savetxt(path, out, fmt="%.6f", delimiter=",")
