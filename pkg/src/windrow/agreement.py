"""Inter-sensor agreement between centerlines: score = 1 - |mean signed lateral offset|."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from windrow.centerline import Centerline

DEFAULT_MATCH_TOLERANCE_NS = 30_000_000


class NoOverlapError(ValueError):
    """Two centerlines share no row where both are valid."""


@dataclass(frozen=True)
class FrameAgreement:
    score: float
    delta_x_mean: float
    overlap_rows: int
    t_ns: int = 0
    # mean |x_a - x_b|; diagnostic, never enters the score
    delta_x_abs_mean: float = 0.0


@dataclass
class AgreementReport:
    per_frame: list[FrameAgreement]
    mean: float
    std: float
    median: float
    min: float
    worst_frames: list[tuple[int, float]]
    sensor_bias: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return len(self.per_frame)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "median": self.median,
            "min": self.min,
            "n_frames": self.n_frames,
            "worst": [{"t_ns": t, "score": s} for t, s in self.worst_frames],
            "sensor_bias": self.sensor_bias,
            "per_frame": [asdict(f) for f in self.per_frame],
        }


def pair_rows(a: Centerline, b: Centerline) -> list[tuple[float, float, float]]:
    """Return ``(y, x_a, x_b)`` for rows valid in both centerlines.

    Both must come from the same grid rows; interpolation is deliberately not done.
    """
    ya, yb = a.ys, b.ys
    if ya.shape != yb.shape or not np.allclose(ya, yb, rtol=0, atol=1e-9):
        raise ValueError("centerlines were built on different grid rows")
    pairs = [
        (pa.y, pa.x, pb.x) for pa, pb in zip(a.points, b.points) if pa.valid and pb.valid
    ]
    if not pairs:
        raise NoOverlapError("no overlap: no row valid in both centerlines")
    return pairs


def frame_agreement(pairs: Sequence[tuple[float, float, float]], t_ns: int = 0) -> FrameAgreement:
    if len(pairs) == 0:
        raise ValueError("frame_agreement needs at least one row pair")
    arr = np.asarray(pairs, dtype=np.float64)
    diff = arr[:, 1] - arr[:, 2]
    delta = float(diff.mean())
    return FrameAgreement(
        score=1.0 - abs(delta),
        delta_x_mean=delta,
        overlap_rows=len(pairs),
        t_ns=t_ns,
        delta_x_abs_mean=float(np.abs(diff).mean()),
    )


def sequence_report(
    frames: Sequence[FrameAgreement],
    centerlines: Optional[Mapping[str, Sequence[Centerline]]] = None,
    worst_n: int = 3,
) -> AgreementReport:
    """Population statistics of per-frame scores plus per-sensor lateral bias."""
    if not frames:
        raise ValueError("sequence_report needs at least one frame")
    frames = sorted(frames, key=lambda f: f.t_ns)
    scores = np.array([f.score for f in frames])
    worst = sorted(((f.t_ns, f.score) for f in frames), key=lambda ts: (ts[1], ts[0]))[:worst_n]

    bias: dict[str, dict[str, float]] = {}
    for sensor, cls in (centerlines or {}).items():
        xs = np.concatenate([c.xs[c.valid] for c in cls]) if cls else np.empty(0)
        if xs.size:
            bias[sensor] = {"mean": float(xs.mean()), "std": float(xs.std()), "n": int(xs.size)}
        else:
            bias[sensor] = {"mean": float("nan"), "std": float("nan"), "n": 0}

    return AgreementReport(
        per_frame=list(frames),
        mean=float(scores.mean()),
        std=float(scores.std()),
        median=float(np.median(scores)),
        min=float(scores.min()),
        worst_frames=worst,
        sensor_bias=bias,
    )


def match_timestamps(
    ts_a: Sequence[int], ts_b: Sequence[int], tolerance_ns: int = DEFAULT_MATCH_TOLERANCE_NS
) -> list[tuple[int, int]]:
    """Nearest-neighbour match of each ``a`` stamp to a ``b`` stamp within tolerance.

    Returns index pairs ``(i, j)``; each ``b`` frame is used at most once.
    """
    tb = np.asarray(ts_b, dtype=np.int64)
    order = np.argsort(tb, kind="stable")
    tb_sorted = tb[order]
    used: set[int] = set()
    out = []
    for i, t in enumerate(ts_a):
        if tb_sorted.size == 0:
            break
        k = int(np.searchsorted(tb_sorted, t))
        best = None
        for cand in (k - 1, k):
            if 0 <= cand < tb_sorted.size:
                d = abs(int(tb_sorted[cand]) - int(t))
                if d <= tolerance_ns and (best is None or d < best[0]):
                    best = (d, int(order[cand]))
        if best is not None and best[1] not in used:
            used.add(best[1])
            out.append((i, best[1]))
    return out


def write_per_frame_csv(report: AgreementReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ns", "score", "delta_x_mean", "delta_x_abs_mean", "overlap_rows"])
        for f in report.per_frame:
            w.writerow([f.t_ns, repr(f.score), repr(f.delta_x_mean), repr(f.delta_x_abs_mean), f.overlap_rows])
