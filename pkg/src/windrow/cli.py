"""Command-line entry point: ``windrow {detect,agree,bench,synth,convert}``.

Exit codes: 0 ok, 1 usage/config error, 2 data error, 3 real-time criterion
failed (``bench --assert-realtime``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from windrow.agreement import (
    DEFAULT_MATCH_TOLERANCE_NS,
    NoOverlapError,
    frame_agreement,
    match_timestamps,
    pair_rows,
    sequence_report,
    write_per_frame_csv,
)
from windrow.bench import run_bench
from windrow.centerline import CenterlineConfig
from windrow.frame_io import (
    FrameFormatError,
    ManifestError,
    PreprocessConfig,
    load_frame,
    read_manifest,
    remove_statistical_outliers,
    save_frame_csv,
    save_frame_pcd,
)
from windrow.grid import GridConfig
from windrow.pipeline import PipelineConfig, centerline_from_record, process_frame, result_record
from windrow.synth import SYNTH_FIELDS, SynthConfig, generate_sequence

log = logging.getLogger("windrow")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_REALTIME = 0, 1, 2, 3
ERROR_FRACTION_LIMIT = 0.10

_SECTIONS = {"preprocess": PreprocessConfig, "grid": GridConfig, "centerline": CenterlineConfig}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _parse_opt_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("none", "off", "null") else float(text)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with preprocess/grid/centerline sections")
    for section, cls in _SECTIONS.items():
        g = p.add_argument_group(section)
        for f in dataclasses.fields(cls):
            default = f.default
            if isinstance(default, bool):
                typ = _parse_bool
            elif default is None or f.name == "min_height":
                typ = _parse_opt_float
            elif isinstance(default, int):
                typ = int
            elif isinstance(default, float):
                typ = float
            else:
                typ = str
            g.add_argument(f"--{section}.{f.name}", dest=f"{section}__{f.name}", type=typ,
                           default=argparse.SUPPRESS, help=f"default {default!r}")


def _build(cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise UsageError(f"unknown {section} fields: {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def resolve_config(args) -> PipelineConfig:
    """Defaults, then the JSON config file, then command-line flags."""
    merged: dict[str, dict] = {s: {} for s in _SECTIONS}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = sorted(set(doc) - set(_SECTIONS))
        if unknown:
            raise UsageError(f"unknown config sections: {', '.join(unknown)}")
        for s in _SECTIONS:
            merged[s].update(doc.get(s, {}))
    for key, val in vars(args).items():
        if "__" in key:
            s, name = key.split("__", 1)
            if s in merged:
                merged[s][name] = val
    return PipelineConfig(*(_build(cls, merged[s], s) for s, cls in _SECTIONS.items()))


def _dump(obj, path: Optional[Path]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _json_default(o):
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


# ----------------------------------------------------------------------- detect


def cmd_detect(args) -> int:
    cfg = resolve_config(args)
    try:
        seq = read_manifest(args.manifest, strict=args.strict)
    except ManifestError as exc:
        raise DataError(str(exc)) from None
    n_err = 0
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for e in seq:
            try:
                frame = load_frame(e.path, e.t_ns, e.sensor_id)
                rec = result_record(frame, process_frame(frame, cfg))
            except (OSError, FrameFormatError) as exc:
                n_err += 1
                rec = {"t_ns": e.t_ns, "sensor": e.sensor_id, "error": str(exc)}
                log.warning("frame %s: %s", e.t_ns, exc)
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    meta = {"config": cfg.to_dict(), "manifest": str(args.manifest), "frames": len(seq), "errors": n_err}
    _dump(meta, out.with_name(out.name + ".config.json"))
    print(f"detect: {len(seq)} frames, {n_err} errors -> {out}")
    if n_err > ERROR_FRACTION_LIMIT * len(seq):
        print(f"detect: error fraction {n_err / len(seq):.1%} exceeds {ERROR_FRACTION_LIMIT:.0%}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


# ------------------------------------------------------------------------ agree


def read_centerlines(path):
    """Parse a centerline JSON-lines file; error records are skipped and counted."""
    out, n_err = [], 0
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        if "error" in rec:
            n_err += 1
            continue
        try:
            out.append(centerline_from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: malformed centerline record ({exc})") from None
    out.sort(key=lambda c: c.frame_timestamp)
    return out, n_err


def cmd_agree(args) -> int:
    cls_a, _ = read_centerlines(args.a)
    cls_b, _ = read_centerlines(args.b)
    tol = int(args.tolerance_ms * 1e6)
    matches = match_timestamps([c.frame_timestamp for c in cls_a], [c.frame_timestamp for c in cls_b], tol)
    frames, no_overlap = [], 0
    used_a, used_b = [], []
    for i, j in matches:
        try:
            pairs = pair_rows(cls_a[i], cls_b[j])
        except NoOverlapError:
            no_overlap += 1
            continue
        except ValueError as exc:
            raise DataError(str(exc)) from None
        frames.append(frame_agreement(pairs, cls_a[i].frame_timestamp))
        used_a.append(cls_a[i])
        used_b.append(cls_b[j])
    if not frames:
        print("agree: no matched frames", file=sys.stderr)
        return EXIT_DATA

    name_a = cls_a[0].source_sensor or "a"
    name_b = cls_b[0].source_sensor or "b"
    if name_b == name_a:
        name_a, name_b = f"{name_a}:a", f"{name_b}:b"
    report = sequence_report(frames, {name_a: used_a, name_b: used_b}, worst_n=args.worst)
    doc = report.to_dict()
    doc["sensors"] = [name_a, name_b]
    doc["unmatched_frames"] = len(cls_a) - len(matches)
    doc["no_overlap_frames"] = no_overlap
    doc["tolerance_ms"] = args.tolerance_ms
    if args.out:
        _dump(doc, args.out)
    if args.csv:
        write_per_frame_csv(report, args.csv)

    print(f"agreement over {report.n_frames} frames: mean {report.mean:.3f} ± {report.std:.3f}, "
          f"median {report.median:.3f}, min {report.min:.3f}")
    print("worst: " + ", ".join(f"{s:.3f} (t={t})" for t, s in report.worst_frames))
    for name, b in report.sensor_bias.items():
        print(f"{name}: lateral {b['mean'] * 100:+.1f} ± {b['std'] * 100:.1f} cm")
    return EXIT_OK


# ------------------------------------------------------------------------ bench


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    try:
        seq = read_manifest(args.manifest, strict=True)
    except ManifestError as exc:
        raise DataError(str(exc)) from None
    try:
        rep = run_bench(seq, cfg, realtime=args.realtime, include_io=args.include_io,
                        inject_delay_ms=args.inject_delay_ms)
    except (OSError, FrameFormatError) as exc:
        raise DataError(str(exc)) from None
    doc = rep.to_dict()
    doc["config"] = cfg.to_dict()
    doc["include_io"] = args.include_io
    if args.out:
        _dump(doc, args.out)
    mode = "realtime" if args.realtime else "throughput"
    print(f"bench ({mode}, {seq.nominal_rate:.1f} Hz): {rep.frames_processed} frames, "
          f"mean {rep.mean_ms:.2f} ms, p50 {rep.p50_ms:.2f}, p99 {rep.p99_ms:.2f}, max {rep.max_ms:.2f}, "
          f"dropped {rep.frames_dropped} -> {'PASS' if rep.realtime_pass else 'FAIL'}")
    if args.assert_realtime and not rep.realtime_pass:
        return EXIT_REALTIME
    return EXIT_OK


# ------------------------------------------------------------------------ synth

_SEQ_KEYS = {"n_frames": 126, "vehicle_speed": 2.8, "frame_rate": 18.3, "frame_format": "csv", "sensor_id": "synth"}


def _synth_config(doc: dict, seed: Optional[int]) -> tuple[SynthConfig, dict]:
    allowed = SYNTH_FIELDS | set(_SEQ_KEYS) | {"grid", "sensors"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise UsageError(f"unknown synth config fields: {', '.join(unknown)}")
    fields = {k: doc[k] for k in SYNTH_FIELDS if k in doc}
    if seed is not None:
        fields["seed"] = seed
    try:
        cfg = SynthConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    seq_opts = {k: doc.get(k, v) for k, v in _SEQ_KEYS.items()}
    if int(seq_opts["n_frames"]) < 1:
        raise UsageError("invalid synth config fields: n_frames")
    return cfg, seq_opts


def cmd_synth(args) -> int:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    cfg, seq_opts = _synth_config(doc, args.seed)
    grid = _build(GridConfig, doc.get("grid", {}), "grid")
    out = Path(args.out)
    sensors = doc.get("sensors")
    jobs = []
    if sensors:
        for idx, sensor in enumerate(sensors):
            sensor = dict(sensor)
            sid = sensor.pop("sensor_id", f"sensor{idx}")
            bad = sorted(set(sensor) - SYNTH_FIELDS)
            if bad:
                raise UsageError(f"unknown sensor fields: {', '.join(bad)}")
            try:
                scfg = dataclasses.replace(cfg, **sensor)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            jobs.append((scfg, sid, idx, out / sid))
    else:
        jobs.append((cfg, seq_opts["sensor_id"], 0, out))

    for scfg, sid, stream, d in jobs:
        seq = generate_sequence(
            scfg, grid, int(seq_opts["n_frames"]), d,
            vehicle_speed=float(seq_opts["vehicle_speed"]), frame_rate=float(seq_opts["frame_rate"]),
            sensor_id=sid, stream=stream, frame_format=seq_opts["frame_format"],
        )
        span = (seq.entries[-1].t_ns - seq.entries[0].t_ns) / 1e9
        print(f"synth[{sid}]: {len(seq)} frames over {span:.2f} s at {seq.nominal_rate} Hz -> {d}")
        print(f"  truth: offset {scfg.center_offset:+.3f} m, curve amp {scfg.center_curve_amp:.3f} m, "
              f"wavelength {scfg.curve_wavelength:.1f} m, skew {scfg.skew:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------- convert


def cmd_convert(args) -> int:
    try:
        frame = load_frame(args.input)
    except (OSError, FrameFormatError) as exc:
        raise DataError(str(exc)) from None
    if args.remove_outliers:
        pcfg = PreprocessConfig(outlier_neighbors=args.neighbors, outlier_std_ratio=args.std_ratio)
        frame = remove_statistical_outliers(frame, pcfg)
    out = Path(args.output)
    if out.suffix.lower() == ".pcd":
        save_frame_pcd(frame, out, binary=args.binary)
    else:
        save_frame_csv(frame, out)
    print(f"convert: {len(frame)} points ({frame.n_dropped} non-finite dropped) -> {out}")
    return EXIT_OK


# ------------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="windrow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="extract centerlines for every frame of a manifest")
    d.add_argument("manifest", type=Path)
    d.add_argument("--out", type=Path, required=True, help="output JSON-lines file")
    d.add_argument("--strict", action="store_true", help="check frame paths before processing")
    _add_config_flags(d)
    d.set_defaults(func=cmd_detect)

    a = sub.add_parser("agree", help="inter-sensor agreement between two centerline files")
    a.add_argument("a", type=Path)
    a.add_argument("b", type=Path)
    a.add_argument("--out", type=Path, help="report JSON")
    a.add_argument("--csv", type=Path, help="per-frame CSV export")
    a.add_argument("--tolerance-ms", type=float, default=DEFAULT_MATCH_TOLERANCE_NS / 1e6)
    a.add_argument("--worst", type=int, default=3)
    a.set_defaults(func=cmd_agree)

    b = sub.add_parser("bench", help="replay a manifest and measure per-frame latency")
    b.add_argument("manifest", type=Path)
    b.add_argument("--realtime", action="store_true", help="release frames on the manifest schedule")
    b.add_argument("--assert-realtime", action="store_true", help="exit 3 unless mean < 50 ms and no drops")
    b.add_argument("--include-io", action="store_true", help="time disk loading too")
    b.add_argument("--inject-delay-ms", type=float, default=0.0, help=argparse.SUPPRESS)
    b.add_argument("--out", type=Path)
    _add_config_flags(b)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth", help="generate a synthetic windrow sequence")
    s.add_argument("--config", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("convert", help="convert frames between CSV and PCD")
    c.add_argument("input", type=Path)
    c.add_argument("output", type=Path)
    c.add_argument("--binary", action="store_true", help="write binary rather than ascii PCD")
    c.add_argument("--remove-outliers", action="store_true", help="apply statistical outlier removal")
    c.add_argument("--neighbors", type=int, default=8)
    c.add_argument("--std-ratio", type=float, default=1.0)
    c.set_defaults(func=cmd_convert)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"windrow {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ManifestError, FrameFormatError, OSError) as exc:
        print(f"windrow {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
