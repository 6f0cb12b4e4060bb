"""Two emulated sensors on a shared scene, scored frame by frame.

Runs synth, detect and agree end to end through the CLI into ``--out``.
Use ``--lidar``/``--stereo`` to point at recorded manifests instead of
generating synthetic ones.
"""

import argparse
import json
from pathlib import Path

from windrow.cli import main as cli
from windrow.grid import GridConfig
from windrow.synth import density_for_points


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("runs/two_sensor"))
    ap.add_argument("--frames", type=int, default=126)
    ap.add_argument("--noise", type=float, default=0.02)
    ap.add_argument("--curve-amp", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--lidar", type=Path, help="existing lidar manifest")
    ap.add_argument("--stereo", type=Path, help="existing stereo manifest")
    args = ap.parse_args()

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.lidar and args.stereo:
        manifests = {"lidar": args.lidar, "stereo": args.stereo}
    else:
        grid = GridConfig()
        cfg = {
            "n_frames": args.frames, "center_curve_amp": args.curve_amp, "noise_sigma_z": args.noise,
            "seed": args.seed,
            "sensors": [
                {"sensor_id": "lidar", "point_density": density_for_points(131_000, grid)},
                {"sensor_id": "stereo", "point_density": density_for_points(66_000, grid)},
            ],
        }
        (out / "synth.json").write_text(json.dumps(cfg, indent=2))
        if cli(["synth", "--config", str(out / "synth.json"), "--out", str(out / "seq")]):
            raise SystemExit("synth failed")
        manifests = {s: out / "seq" / s / "manifest.jsonl" for s in ("lidar", "stereo")}

    for name, man in manifests.items():
        if cli(["detect", str(man), "--out", str(out / f"{name}.jsonl")]):
            raise SystemExit(f"detect failed for {name}")
    raise SystemExit(cli([
        "agree", str(out / "lidar.jsonl"), str(out / "stereo.jsonl"),
        "--out", str(out / "agreement.json"), "--csv", str(out / "agreement.csv"),
    ]))


if __name__ == "__main__":
    main()
