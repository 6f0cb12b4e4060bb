"""Per-frame detection pipeline: preprocess -> rasterize -> centerline -> guidance."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from windrow.centerline import (
    Centerline,
    CenterlineConfig,
    CenterlinePoint,
    GuidanceTarget,
    extract_centerline,
    guidance_target,
)
from windrow.frame_io import PointCloudFrame, PreprocessConfig, height_prefilter, preprocess
from windrow.grid import GridConfig, ground_offset, rasterize


@dataclass(frozen=True)
class PipelineConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    centerline: CenterlineConfig = field(default_factory=CenterlineConfig)

    def to_dict(self) -> dict:
        return {
            "preprocess": asdict(self.preprocess),
            "grid": asdict(self.grid),
            "centerline": asdict(self.centerline),
        }


@dataclass(frozen=True)
class FrameResult:
    centerline: Centerline
    guidance: GuidanceTarget
    z_offset: float = 0.0


def process_frame(frame: PointCloudFrame, cfg: PipelineConfig) -> FrameResult:
    pts = preprocess(frame, cfg.preprocess)
    z_off = 0.0
    if cfg.grid.ground_compensation and len(pts):
        try:
            z_off = ground_offset(pts, cfg.grid.ground_quantile, cfg.grid)
        except ValueError:
            z_off = 0.0
        if z_off:
            shifted = pts.points.copy()
            shifted[:, 2] -= z_off
            pts = pts.with_points(shifted)
    if cfg.preprocess.min_height_prefilter > 0:
        pts = height_prefilter(pts, cfg.preprocess.min_height_prefilter)
    grid = rasterize(pts, cfg.grid)
    cl = extract_centerline(grid, cfg.centerline, frame.sensor_id, frame.timestamp)
    return FrameResult(cl, guidance_target(cl, cfg.centerline.lookahead_y), z_off)


def _num(v: float):
    return None if not math.isfinite(v) else v


def result_record(frame: PointCloudFrame, res: FrameResult) -> dict:
    """JSON-serialisable centerline record for one frame."""
    g = res.guidance
    return {
        "t_ns": int(frame.timestamp),
        "sensor": frame.sensor_id,
        "points": [
            {"y": p.y, "x": _num(p.x) if p.valid else None, "valid": p.valid, "w": p.weight_sum}
            for p in res.centerline.points
        ],
        "guidance": {
            "lat": _num(g.lateral_error),
            "head": _num(g.heading_error),
            "lookahead": g.lookahead_y,
            "valid": g.valid,
        },
    }


def centerline_from_record(rec: dict) -> Centerline:
    pts = tuple(
        CenterlinePoint(
            float(p["y"]),
            float(p["x"]) if p.get("valid") and p.get("x") is not None else math.nan,
            float(p.get("w", 0.0)),
            bool(p.get("valid")) and p.get("x") is not None,
        )
        for p in rec["points"]
    )
    return Centerline(pts, rec.get("sensor", ""), int(rec["t_ns"]))
