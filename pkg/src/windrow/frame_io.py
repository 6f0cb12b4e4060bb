"""Point-cloud frame loading, manifests and preprocessing.

Frames live in the vehicle frame: y forward, x lateral (left positive),
z up with the ground close to z = 0. Points are stored as an (N, 3)
float64 array in x, y, z column order.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

Z_SANITY_FLOOR = -0.5
DEFAULT_RATE_HZ = 18.3


class FrameFormatError(ValueError):
    """Raised when a frame file cannot be parsed."""


class ManifestError(ValueError):
    """Raised for malformed or inconsistent frame manifests."""


@dataclass(frozen=True)
class PointCloudFrame:
    points: np.ndarray
    timestamp: int = 0
    sensor_id: str = ""
    # non-finite points removed by the loader
    n_dropped: int = 0

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def with_points(self, points: np.ndarray) -> "PointCloudFrame":
        return PointCloudFrame(points, self.timestamp, self.sensor_id, self.n_dropped)


@dataclass(frozen=True)
class FrameEntry:
    t_ns: int
    path: Path
    sensor_id: str


@dataclass(frozen=True)
class FrameSequence:
    entries: tuple[FrameEntry, ...]
    nominal_rate: float

    def __post_init__(self) -> None:
        if not self.nominal_rate > 0:
            raise ManifestError(f"nominal_rate must be > 0, got {self.nominal_rate}")
        ts = [e.t_ns for e in self.entries]
        for i in range(1, len(ts)):
            if ts[i] <= ts[i - 1]:
                raise ManifestError(
                    f"timestamps not strictly increasing at entry {i}: {ts[i - 1]} -> {ts[i]}"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[FrameEntry]:
        return iter(self.entries)


@dataclass(frozen=True)
class PreprocessConfig:
    range_max: float = 30.0
    outlier_neighbors: int = 8
    outlier_std_ratio: float = 1.0
    min_height_prefilter: float = 0.10
    # kNN outlier removal is an offline dataset step; too slow for the online budget
    remove_outliers: bool = False

    def __post_init__(self) -> None:
        errors = []
        if not self.range_max > 0:
            errors.append("range_max")
        if self.outlier_neighbors < 1:
            errors.append("outlier_neighbors")
        if not self.outlier_std_ratio > 0:
            errors.append("outlier_std_ratio")
        if not self.min_height_prefilter >= 0:
            errors.append("min_height_prefilter")
        if errors:
            raise ValueError(f"invalid PreprocessConfig fields: {', '.join(errors)}")


def _finite_split(pts: np.ndarray) -> tuple[np.ndarray, int]:
    ok = np.isfinite(pts).all(axis=1)
    return pts[ok], int((~ok).sum())


# --------------------------------------------------------------------------- CSV


def _is_numeric_row(line: str) -> bool:
    parts = line.split(",")
    if len(parts) < 3:
        return False
    try:
        for p in parts[:3]:
            float(p)
    except ValueError:
        return False
    return True


def _slow_parse_csv(lines: Sequence[str], first_lineno: int) -> np.ndarray:
    rows = []
    for offset, line in enumerate(lines):
        lineno = first_lineno + offset
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) < 3:
            raise FrameFormatError(f"line {lineno}: expected at least 3 fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts[:3]])
        except ValueError as exc:
            raise FrameFormatError(f"line {lineno}: malformed numeric field ({exc})") from None
    return np.asarray(rows, dtype=np.float64).reshape(-1, 3)


def load_frame_csv(path, timestamp: int = 0, sensor_id: str = "") -> PointCloudFrame:
    """Load an ``x,y,z[,extra...]`` CSV frame with an optional header line.

    Non-finite points are dropped and counted in ``n_dropped``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    start = 0
    while start < len(lines) and not lines[start].strip():
        start += 1
    if start < len(lines) and not _is_numeric_row(lines[start]):
        start += 1  # header
    body = lines[start:]
    if not any(line.strip() for line in body):
        raise FrameFormatError(f"{path}: zero parseable lines")
    try:
        pts = np.loadtxt(body, delimiter=",", usecols=(0, 1, 2), dtype=np.float64, ndmin=2)
    except ValueError:
        # rerun line by line to locate the offending line
        pts = _slow_parse_csv(body, start + 1)
    pts, dropped = _finite_split(pts)
    return PointCloudFrame(pts, timestamp, sensor_id, dropped)


def save_frame_csv(frame: PointCloudFrame, path, header: bool = True) -> None:
    # repr is the shortest string that round-trips a float64 exactly
    lines = [f"{x!r},{y!r},{z!r}\n" for x, y, z in frame.points.tolist()]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write("x,y,z\n")
        fh.write("".join(lines))


# --------------------------------------------------------------------------- PCD

_PCD_TYPES = {
    ("F", 4): "<f4",
    ("F", 8): "<f8",
    ("I", 1): "<i1",
    ("I", 2): "<i2",
    ("I", 4): "<i4",
    ("I", 8): "<i8",
    ("U", 1): "<u1",
    ("U", 2): "<u2",
    ("U", 4): "<u4",
    ("U", 8): "<u8",
}

_PCD_KEYS = ("VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA")


def _parse_pcd_header(raw: bytes, path: Path) -> tuple[dict, int]:
    header: dict[str, list[str]] = {}
    pos = 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise FrameFormatError(f"{path}: truncated PCD header")
        line = raw[pos:nl].decode("ascii", errors="replace").strip()
        pos = nl + 1
        if not line or line.startswith("#"):
            continue
        key, *vals = re.split(r"\s+", line)
        key = key.upper()
        if key not in _PCD_KEYS:
            raise FrameFormatError(f"{path}: unexpected PCD header line {line!r}")
        header[key] = vals
        if key == "DATA":
            return header, pos


def _pcd_dtype(header: dict, path: Path) -> np.dtype:
    fields = header.get("FIELDS", [])
    sizes = [int(s) for s in header.get("SIZE", [])]
    types = [t.upper() for t in header.get("TYPE", [])]
    counts = [int(c) for c in header.get("COUNT", ["1"] * len(fields))]
    if not (len(fields) == len(sizes) == len(types) == len(counts)):
        raise FrameFormatError(f"{path}: FIELDS/SIZE/TYPE/COUNT lengths differ")
    if not {"x", "y", "z"} <= set(fields):
        raise FrameFormatError(f"{path}: FIELDS lacks x/y/z: {fields}")
    parts = []
    for i, (name, size, typ, count) in enumerate(zip(fields, sizes, types, counts)):
        if (typ, size) not in _PCD_TYPES:
            raise FrameFormatError(f"{path}: unsupported field type {typ}{size} for {name!r}")
        name = name if name != "_" else f"_pad{i}"
        parts.append((name, _PCD_TYPES[(typ, size)], (count,)) if count > 1 else (name, _PCD_TYPES[(typ, size)]))
    return np.dtype(parts)


def load_frame_pcd(path, timestamp: int = 0, sensor_id: str = "") -> PointCloudFrame:
    """Load a PCD v0.7 file (DATA ascii or binary); fields other than x, y, z are ignored."""
    path = Path(path)
    raw = path.read_bytes()
    header, offset = _parse_pcd_header(raw, path)
    dtype = _pcd_dtype(header, path)
    encoding = header["DATA"][0].lower() if header["DATA"] else ""
    if "POINTS" in header:
        n_points = int(header["POINTS"][0])
    else:
        n_points = int(header.get("WIDTH", ["0"])[0]) * int(header.get("HEIGHT", ["1"])[0])

    if encoding == "binary":
        payload = raw[offset:]
        if len(payload) != n_points * dtype.itemsize:
            raise FrameFormatError(
                f"{path}: POINTS {n_points} needs {n_points * dtype.itemsize} bytes, payload has {len(payload)}"
            )
        arr = np.frombuffer(payload, dtype=dtype, count=n_points)
        pts = np.column_stack([arr["x"], arr["y"], arr["z"]]).astype(np.float64)
    elif encoding == "ascii":
        text = raw[offset:].decode("ascii")
        rows = [ln for ln in text.splitlines() if ln.strip()]
        if len(rows) != n_points:
            raise FrameFormatError(f"{path}: POINTS {n_points} but {len(rows)} data rows")
        first_col = {}
        col = 0
        for name in dtype.names:
            first_col[name] = col
            col += int(np.prod(dtype[name].shape)) if dtype[name].shape else 1
        usecols = [first_col[k] for k in ("x", "y", "z")]
        if n_points == 0:
            pts = np.empty((0, 3))
        else:
            try:
                pts = np.loadtxt(rows, usecols=usecols, dtype=np.float32, ndmin=2).astype(np.float64)
            except ValueError as exc:
                raise FrameFormatError(f"{path}: malformed ascii PCD data ({exc})") from None
    else:
        raise FrameFormatError(f"{path}: unsupported encoding {encoding!r}")

    pts, dropped = _finite_split(pts)
    return PointCloudFrame(pts, timestamp, sensor_id, dropped)


def save_frame_pcd(frame: PointCloudFrame, path, binary: bool = False) -> None:
    """Write an xyz float32 PCD v0.7 file."""
    pts = frame.points.astype("<f4")
    n = pts.shape[0]
    header = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n"
        f"WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\n"
        f"DATA {'binary' if binary else 'ascii'}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(pts).tobytes())
        elif n:
            # 9 significant digits round-trip float32
            buf = []
            for row in pts:
                buf.append(" ".join(f"{v:.9g}" for v in row.tolist()))
            fh.write(("\n".join(buf) + "\n").encode("ascii"))


def load_frame(path, timestamp: int = 0, sensor_id: str = "") -> PointCloudFrame:
    """Dispatch on file suffix (``.pcd`` or CSV)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"frame file not found: {path}")
    if path.suffix.lower() == ".pcd":
        return load_frame_pcd(path, timestamp, sensor_id)
    return load_frame_csv(path, timestamp, sensor_id)


# ---------------------------------------------------------------------- manifest


def read_manifest(path, strict: bool = False) -> FrameSequence:
    """Read a JSON-lines manifest of ``{"t_ns", "file", "sensor"}`` objects.

    The nominal rate comes from a leading ``{"nominal_rate_hz": ...}`` line,
    a ``sequence.json`` sidecar, or the median frame period, in that order.
    Out-of-order timestamps are an error; entries are never re-sorted.
    """
    path = Path(path)
    base = path.parent
    rate: Optional[float] = None
    default_sensor = ""
    sidecar = base / "sequence.json"
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        rate = meta.get("nominal_rate_hz")
        default_sensor = meta.get("sensor_id", "")

    entries: list[FrameEntry] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if "t_ns" not in obj:
            if "nominal_rate_hz" in obj and not entries:
                rate = obj["nominal_rate_hz"]
                default_sensor = obj.get("sensor_id", default_sensor)
                continue
            raise ManifestError(f"{path}:{lineno}: entry lacks t_ns")
        if "file" not in obj:
            raise ManifestError(f"{path}:{lineno}: entry lacks file")
        t_ns = int(obj["t_ns"])
        if entries and t_ns <= entries[-1].t_ns:
            raise ManifestError(
                f"{path}:{lineno}: timestamps not strictly increasing ({entries[-1].t_ns} -> {t_ns})"
            )
        fpath = Path(obj["file"])
        if not fpath.is_absolute():
            fpath = base / fpath
        if strict and not fpath.exists():
            raise ManifestError(f"{path}:{lineno}: dangling file path {fpath}")
        entries.append(FrameEntry(t_ns, fpath, str(obj.get("sensor", default_sensor))))

    if not entries:
        raise ManifestError(f"{path}: no frames")
    if rate is None:
        if len(entries) > 1:
            periods = np.diff([e.t_ns for e in entries])
            rate = 1e9 / float(np.median(periods))
        else:
            rate = DEFAULT_RATE_HZ
    return FrameSequence(tuple(entries), float(rate))


def write_manifest(path, entries: Sequence[FrameEntry], nominal_rate: float, sensor_id: str = "") -> None:
    """Write a manifest plus its ``sequence.json`` sidecar; file paths are stored relative."""
    path = Path(path)
    base = path.parent
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            try:
                rel = Path(e.path).relative_to(base)
            except ValueError:
                rel = Path(e.path)
            fh.write(json.dumps({"t_ns": int(e.t_ns), "file": rel.as_posix(), "sensor": e.sensor_id}) + "\n")
    sidecar = {"nominal_rate_hz": nominal_rate, "sensor_id": sensor_id}
    (base / "sequence.json").write_text(json.dumps(sidecar, indent=2) + "\n")


# ------------------------------------------------------------------ preprocessing


def remove_statistical_outliers(frame: PointCloudFrame, cfg: PreprocessConfig) -> PointCloudFrame:
    """Classic statistical outlier removal on mean k-nearest-neighbour distance.

    A point survives iff its mean distance to its k nearest neighbours is at
    most ``mean + std_ratio * std`` of that statistic over the frame. Ties are
    kept, so a zero-variance frame is returned unchanged.
    """
    n = len(frame)
    if n < 2:
        return frame
    k = min(cfg.outlier_neighbors, n - 1)
    tree = cKDTree(frame.points)
    dist, _ = tree.query(frame.points, k=k + 1)
    mean_d = dist[:, 1:].mean(axis=1)
    limit = mean_d.mean() + cfg.outlier_std_ratio * mean_d.std()
    return frame.with_points(frame.points[mean_d <= limit])


def crop_range(frame: PointCloudFrame, cfg: PreprocessConfig) -> PointCloudFrame:
    pts = frame.points
    r2 = np.einsum("ij,ij->i", pts, pts)
    keep = (r2 <= cfg.range_max * cfg.range_max) & (pts[:, 2] >= Z_SANITY_FLOOR)
    return frame.with_points(pts[keep])


def height_prefilter(frame: PointCloudFrame, min_height: float) -> PointCloudFrame:
    return frame.with_points(frame.points[frame.points[:, 2] >= min_height])


def preprocess(frame: PointCloudFrame, cfg: PreprocessConfig) -> PointCloudFrame:
    """Range crop, then optional outlier removal. Height prefiltering is left to the caller."""
    out = crop_range(frame, cfg)
    if cfg.remove_outliers:
        out = remove_statistical_outliers(out, cfg)
    return out
