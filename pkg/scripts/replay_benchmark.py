"""Real-time replay benchmark on lidar-sized synthetic frames.

Generates ``--frames`` PCD frames (unless ``--manifest`` is given) and replays
them at their recorded rate, once in real-time mode and once back to back.
"""

import argparse
import json
from pathlib import Path

from windrow.bench import run_bench
from windrow.frame_io import read_manifest
from windrow.grid import GridConfig
from windrow.pipeline import PipelineConfig
from windrow.synth import SynthConfig, density_for_points, generate_sequence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/replay"))
    ap.add_argument("--manifest", type=Path)
    ap.add_argument("--frames", type=int, default=200)
    ap.add_argument("--points", type=float, default=131_000)
    ap.add_argument("--include-io", action="store_true")
    args = ap.parse_args()

    if args.manifest:
        seq = read_manifest(args.manifest, strict=True)
    else:
        grid = GridConfig()
        cfg = SynthConfig(point_density=density_for_points(args.points, grid), noise_sigma_z=0.02,
                          center_curve_amp=0.3, seed=1)
        seq = generate_sequence(cfg, grid, args.frames, args.out / "seq", frame_format="pcd")

    pipe = PipelineConfig()
    results = {}
    for mode, realtime in (("realtime", True), ("throughput", False)):
        rep = run_bench(seq, pipe, realtime=realtime, include_io=args.include_io)
        results[mode] = {k: v for k, v in rep.to_dict().items() if k != "per_frame_ms"}
        print(f"{mode:>10}: mean {rep.mean_ms:6.2f} ms  p99 {rep.p99_ms:6.2f} ms  "
              f"max {rep.max_ms:6.2f} ms  dropped {rep.frames_dropped}  pass {rep.realtime_pass}")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "replay.json").write_text(json.dumps(results, indent=2) + "\n")


if __name__ == "__main__":
    main()
