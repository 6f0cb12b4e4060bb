"""Replay harness measuring per-frame compute latency against a real-time schedule.

A loader thread prefetches frames from disk ahead of a single compute stage.
In real-time mode frames are released on the manifest's timestamp schedule;
the pending queue holds at most ``queue_depth`` frames, and each newer
arrival beyond that evicts (drops) the oldest pending frame.
"""

from __future__ import annotations

import contextlib
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from windrow.frame_io import FrameSequence, PointCloudFrame, load_frame
from windrow.pipeline import PipelineConfig, process_frame

BUDGET_MS = 50.0


@dataclass
class LatencyReport:
    per_frame_ms: list[float]
    frames_processed: int
    frames_dropped: int
    source_rate_hz: float
    realtime: bool = False
    mean_ms: float = field(init=False)
    p50_ms: float = field(init=False)
    p99_ms: float = field(init=False)
    max_ms: float = field(init=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.per_frame_ms, dtype=np.float64)
        if arr.size:
            self.mean_ms = float(arr.mean())
            self.p50_ms = float(np.percentile(arr, 50))
            self.p99_ms = float(np.percentile(arr, 99))
            self.max_ms = float(arr.max())
        else:
            self.mean_ms = self.p50_ms = self.p99_ms = self.max_ms = float("nan")

    @property
    def realtime_pass(self) -> bool:
        return self.frames_processed > 0 and self.mean_ms < BUDGET_MS and self.frames_dropped == 0

    def to_dict(self) -> dict:
        return {
            "mean_ms": self.mean_ms,
            "p50_ms": self.p50_ms,
            "p99_ms": self.p99_ms,
            "max_ms": self.max_ms,
            "frames_processed": self.frames_processed,
            "frames_dropped": self.frames_dropped,
            "source_rate_hz": self.source_rate_hz,
            "realtime": self.realtime,
            "realtime_pass": self.realtime_pass,
            "per_frame_ms": list(self.per_frame_ms),
        }


class _Prefetcher:
    """Background loader handing frames to the compute stage in manifest order."""

    def __init__(self, seq: FrameSequence, depth: int = 8):
        self._seq = seq
        self._q: queue.Queue = queue.Queue(maxsize=depth)
        self._stop = threading.Event()
        # held while loading; the compute stage takes it around each timed step
        self.io_lock = threading.Lock()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self) -> None:
        for e in self._seq:
            if self._stop.is_set():
                return
            with self.io_lock:
                try:
                    item = load_frame(e.path, e.t_ns, e.sensor_id)
                except Exception as exc:  # surfaced to the consumer
                    item = exc
            while not self._stop.is_set():
                try:
                    self._q.put(item, timeout=0.1)
                    break
                except queue.Full:
                    continue

    def get(self):
        item = self._q.get()
        if isinstance(item, Exception):
            raise item
        return item

    def close(self) -> None:
        self._stop.set()
        self._thread.join(timeout=1.0)


def replay(
    frames: Callable[[int], PointCloudFrame],
    release_ns: Sequence[int],
    step: Callable[[PointCloudFrame], object],
    realtime: bool = True,
    queue_depth: int = 2,
    source_rate_hz: float = 0.0,
    clock: Callable[[], float] = time.perf_counter,
    sleep: Callable[[float], None] = time.sleep,
    guard: Optional[threading.Lock] = None,
) -> LatencyReport:
    """Drive ``step`` over frames, timing each call.

    ``frames(i)`` must be called for every index in order (dropped ones
    included) so a sequential loader stays in sync. ``guard``, if given, is
    held around each timed step so background loading never overlaps it.
    """
    guard = guard if guard is not None else contextlib.nullcontext()
    n = len(release_ns)
    rel = [(t - release_ns[0]) * 1e-9 for t in release_ns] if n else []
    latencies: list[float] = []
    dropped = 0
    t0 = clock()
    i = 0
    while i < n:
        if realtime:
            now = clock() - t0
            if rel[i] > now:
                sleep(rel[i] - now)
                now = clock() - t0
            released = i
            while released < n and rel[released] <= now:
                released += 1
            backlog = released - i
            if backlog > queue_depth:
                for _ in range(backlog - queue_depth):
                    frames(i)
                    dropped += 1
                    i += 1
        frame = frames(i)
        with guard:
            start = clock()
            step(frame)
            latencies.append((clock() - start) * 1e3)
        i += 1
    return LatencyReport(latencies, len(latencies), dropped, source_rate_hz, realtime)


def run_bench(
    seq: FrameSequence,
    cfg: PipelineConfig,
    realtime: bool = True,
    include_io: bool = False,
    inject_delay_ms: float = 0.0,
    queue_depth: int = 2,
) -> LatencyReport:
    """Replay a manifest through the pipeline and report compute latency.

    Disk loading runs ahead in a prefetch thread and is excluded from timing
    unless ``include_io`` is set, in which case frames load inside the timed step.
    """

    def compute(frame: PointCloudFrame) -> None:
        process_frame(frame, cfg)
        if inject_delay_ms:
            time.sleep(inject_delay_ms / 1e3)

    entries = list(seq)
    release = [e.t_ns for e in entries]
    if include_io:

        def step(entry) -> None:
            compute(load_frame(entry.path, entry.t_ns, entry.sensor_id))

        return replay(lambda i: entries[i], release, step, realtime, queue_depth, seq.nominal_rate)

    pre = _Prefetcher(seq)
    try:
        return replay(
            lambda i: pre.get(), release, compute, realtime, queue_depth, seq.nominal_rate, guard=pre.io_lock
        )
    finally:
        pre.close()
