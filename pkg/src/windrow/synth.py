"""Synthetic windrow scenes with exact ground-truth centerlines.

The surface is a Gaussian ridge on flat ground whose lateral width can be
stretched on the left (+x) side to make an asymmetric crest:

    z(x, y) = A * exp(-(x - c(y))^2 / (2 s^2)),  s = sigma * (1 + skew) if x > c(y) else sigma
    c(y)    = offset + curve_amp * sin(2 pi y / wavelength)

Points come from a jittered lattice over the ROI, so realised counts track
the requested density closely.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from windrow.frame_io import (
    FrameEntry,
    FrameSequence,
    PointCloudFrame,
    save_frame_csv,
    save_frame_pcd,
    write_manifest,
)
from windrow.grid import GridConfig

LIDAR_POINTS = 131_000
STEREO_POINTS = 66_000


@dataclass(frozen=True)
class SynthConfig:
    ridge_amplitude: float = 0.5
    ridge_sigma: float = 0.4
    center_offset: float = 0.0
    center_curve_amp: float = 0.0
    curve_wavelength: float = 12.0
    skew: float = 0.0
    point_density: float = 1000.0
    noise_sigma_z: float = 0.0
    dropout_rate: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        bad = invalid_fields(self)
        if bad:
            raise ValueError(f"invalid SynthConfig fields: {', '.join(bad)}")

    def center(self, y):
        """Lateral ridge center at world forward position ``y``."""
        y = np.asarray(y, dtype=np.float64)
        return self.center_offset + self.center_curve_amp * np.sin(2 * np.pi * y / self.curve_wavelength)

    def surface(self, x, y) -> np.ndarray:
        d = np.asarray(x, dtype=np.float64) - self.center(y)
        s = np.where(d > 0, self.ridge_sigma * (1.0 + self.skew), self.ridge_sigma)
        return self.ridge_amplitude * np.exp(-(d * d) / (2.0 * s * s))


def invalid_fields(cfg: SynthConfig) -> list[str]:
    bad = []
    # amplitude 0 is allowed: flat ground, no windrow
    if not cfg.ridge_amplitude >= 0:
        bad.append("ridge_amplitude")
    if not cfg.ridge_sigma > 0:
        bad.append("ridge_sigma")
    if not cfg.curve_wavelength > 0:
        bad.append("curve_wavelength")
    if not 0 <= cfg.skew < 1:
        bad.append("skew")
    if not cfg.point_density > 0:
        bad.append("point_density")
    if not cfg.noise_sigma_z >= 0:
        bad.append("noise_sigma_z")
    if not 0 <= cfg.dropout_rate < 1:
        bad.append("dropout_rate")
    return bad


@dataclass(frozen=True)
class SynthScene:
    frame: PointCloudFrame
    truth: np.ndarray  # c(y) at each grid row center, vehicle frame
    config: SynthConfig
    grid: GridConfig


def roi_area(grid: GridConfig) -> float:
    return (grid.y_max - grid.y_min) * 2 * grid.x_half_width


def density_for_points(n_points: float, grid: GridConfig) -> float:
    """Point density that puts about ``n_points`` points in the ROI."""
    return n_points / roi_area(grid)


def _frame_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


def generate_scene(
    cfg: SynthConfig,
    grid: GridConfig = GridConfig(),
    pose_y: float = 0.0,
    t_ns: int = 0,
    sensor_id: str = "synth",
    rng: Optional[np.random.Generator] = None,
) -> SynthScene:
    """Sample one frame with the vehicle at world forward position ``pose_y``."""
    if rng is None:
        rng = _frame_rng(cfg.seed, 0, 0)
    width = 2 * grid.x_half_width
    length = grid.y_max - grid.y_min
    pitch = 1.0 / math.sqrt(cfg.point_density)
    nx = max(1, int(round(width / pitch)))
    ny = max(1, int(round(length / pitch)))
    ax, ay = width / nx, length / ny

    jx = rng.random((ny, nx))
    jy = rng.random((ny, nx))
    x = -grid.x_half_width + (np.arange(nx)[None, :] + jx) * ax
    y = grid.y_min + (np.arange(ny)[:, None] + jy) * ay
    x, y = x.ravel(), y.ravel()
    z = cfg.surface(x, y + pose_y)
    if cfg.noise_sigma_z > 0:
        z = z + rng.normal(0.0, cfg.noise_sigma_z, z.shape)
    if cfg.dropout_rate > 0:
        keep = rng.random(z.shape) >= cfg.dropout_rate
        x, y, z = x[keep], y[keep], z[keep]

    # micrometre quantisation keeps written frames compact
    pts = np.round(np.column_stack([x, y, z]), 6)
    frame = PointCloudFrame(pts, t_ns, sensor_id)
    truth = cfg.center(grid.y_centers() + pose_y)
    return SynthScene(frame, truth, cfg, grid)


def frame_timestamp(index: int, frame_rate: float, t0_ns: int = 0) -> int:
    return t0_ns + int(index * 1e9 / frame_rate)


def generate_sequence(
    cfg: SynthConfig,
    grid: GridConfig,
    n_frames: int,
    out_dir,
    vehicle_speed: float = 2.8,
    frame_rate: float = 18.3,
    sensor_id: str = "synth",
    stream: int = 0,
    frame_format: str = "csv",
) -> FrameSequence:
    """Write frames, ``manifest.jsonl``, ``sequence.json`` and ``truth.csv`` into ``out_dir``.

    The vehicle advances ``vehicle_speed / frame_rate`` metres along y per
    frame. Frame ``k`` draws from an RNG seeded by ``(seed, stream, k)``, so
    output never depends on generation order.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if frame_format not in ("csv", "pcd"):
        raise ValueError(f"unknown frame_format {frame_format!r}")
    out = Path(out_dir)
    frames_dir = out / "frames"
    try:
        frames_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {frames_dir}: {exc}") from exc

    entries = []
    truth_rows = []
    ys = grid.y_centers()
    step = vehicle_speed / frame_rate
    for k in range(n_frames):
        t_ns = frame_timestamp(k, frame_rate)
        scene = generate_scene(cfg, grid, k * step, t_ns, sensor_id, _frame_rng(cfg.seed, stream, k))
        path = frames_dir / f"frame_{k:05d}.{frame_format}"
        try:
            if frame_format == "csv":
                save_frame_csv(scene.frame, path)
            else:
                save_frame_pcd(scene.frame, path, binary=True)
        except OSError as exc:
            raise OSError(f"failed writing {path}: {exc}") from exc
        entries.append(FrameEntry(t_ns, path, sensor_id))
        truth_rows.extend((k, t_ns, float(y), float(c)) for y, c in zip(ys, scene.truth))

    write_manifest(out / "manifest.jsonl", entries, frame_rate, sensor_id)
    with open(out / "truth.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frame,t_ns,y,c\n")
        for k, t, y, c in truth_rows:
            fh.write(f"{k},{t},{y!r},{c!r}\n")
    meta = {
        "synth": asdict(cfg),
        "grid": asdict(grid),
        "n_frames": n_frames,
        "vehicle_speed": vehicle_speed,
        "frame_rate": frame_rate,
        "sensor_id": sensor_id,
        "stream": stream,
        "frame_format": frame_format,
    }
    (out / "synth_config.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return FrameSequence(tuple(entries), frame_rate)


def read_truth(path) -> dict[int, np.ndarray]:
    """Load ``truth.csv`` as ``{t_ns: c(y) per row}``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out: dict[int, list[float]] = {}
    for _, t, _, c in data:
        out.setdefault(int(t), []).append(c)
    return {t: np.asarray(v) for t, v in out.items()}


SYNTH_FIELDS = {f.name for f in fields(SynthConfig)}
