import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from windrow.agreement import (
    FrameAgreement,
    NoOverlapError,
    frame_agreement,
    match_timestamps,
    pair_rows,
    sequence_report,
    write_per_frame_csv,
)
from windrow.centerline import Centerline, CenterlinePoint
from windrow.grid import GridConfig

YS = GridConfig().y_centers()


def cl(xs, valid=None, sensor="", t_ns=0):
    valid = np.ones(len(xs), bool) if valid is None else np.asarray(valid)
    return Centerline(
        tuple(CenterlinePoint(float(y), float(x) if v else math.nan, 1.0, bool(v)) for y, x, v in zip(YS, xs, valid)),
        sensor,
        t_ns,
    )


def test_pair_rows_intersection():
    xs = np.zeros(60)
    a = cl(xs)
    b = cl(xs, np.arange(60) >= 10)
    assert len(pair_rows(a, b)) == 50


def test_pair_rows_disjoint():
    xs = np.zeros(60)
    with pytest.raises(NoOverlapError, match="no overlap"):
        pair_rows(cl(xs, np.arange(60) < 30), cl(xs, np.arange(60) >= 30))


def test_pair_rows_identical():
    xs = np.linspace(-0.2, 0.2, 60)
    pairs = pair_rows(cl(xs), cl(xs))
    assert len(pairs) == 60 and all(xa == xb for _, xa, xb in pairs)


def test_pair_rows_requires_same_bins():
    other = Centerline(tuple(CenterlinePoint(float(y) + 0.05, 0.0, 1.0, True) for y in YS))
    with pytest.raises(ValueError, match="different grid rows"):
        pair_rows(cl(np.zeros(60)), other)


@pytest.mark.parametrize("offset,score", [(0.0, 1.0), (0.035, 0.965), (0.157, 0.843)])
def test_frame_agreement_constant_offset(offset, score):
    xs = np.linspace(-0.3, 0.3, 60)
    fa = frame_agreement(pair_rows(cl(xs + offset), cl(xs)))
    assert fa.score == pytest.approx(score, abs=1e-12)
    assert fa.delta_x_mean == pytest.approx(offset, abs=1e-12)
    assert fa.overlap_rows == 60


def test_signed_mean_cancellation():
    d = np.where(np.arange(60) < 30, 0.1, -0.1)
    fa = frame_agreement(pair_rows(cl(d), cl(np.zeros(60))))
    assert fa.score == pytest.approx(1.0, abs=1e-12)
    assert fa.delta_x_abs_mean == pytest.approx(0.1)


def test_frame_agreement_needs_pairs():
    with pytest.raises(ValueError):
        frame_agreement([])


def test_report_two_frames():
    r = sequence_report([FrameAgreement(1.0, 0.0, 5, 0), FrameAgreement(0.9, 0.1, 5, 1)])
    assert r.mean == pytest.approx(0.95)
    assert r.median == pytest.approx(0.95)
    assert r.min == pytest.approx(0.9)
    assert r.worst_frames[0] == (1, 0.9)


def test_report_single_frame():
    r = sequence_report([FrameAgreement(0.97, 0.03, 5, 0)])
    assert r.mean == r.median == r.min == 0.97
    assert r.std == 0.0


def test_report_monte_carlo():
    rng = np.random.default_rng(7)
    offsets = rng.normal(0.035, 0.02, 126)
    base = np.linspace(-0.2, 0.2, 60)
    frames = [frame_agreement(pair_rows(cl(base + o), cl(base)), t) for t, o in enumerate(offsets)]
    r = sequence_report(frames)
    # direct simulation over the same draws
    sim = 1.0 - np.abs(offsets)
    assert r.mean == pytest.approx(sim.mean(), abs=1e-12)
    assert r.median == pytest.approx(np.median(sim), abs=1e-12)
    assert r.n_frames == 126
    assert [s for _, s in r.worst_frames] == pytest.approx(np.sort(sim)[:3], abs=1e-12)


def test_sensor_bias():
    a = [cl(np.full(60, -0.04), sensor="zed"), cl(np.full(60, -0.05), sensor="zed")]
    b = [cl(np.full(60, -0.06), sensor="os0")] * 2
    frames = [frame_agreement(pair_rows(x, y)) for x, y in zip(a, b)]
    r = sequence_report(frames, {"zed": a, "os0": b})
    assert r.sensor_bias["zed"]["mean"] == pytest.approx(-0.045)
    assert r.sensor_bias["zed"]["std"] == pytest.approx(0.005)
    assert r.sensor_bias["os0"]["std"] == pytest.approx(0.0, abs=1e-15)


def test_report_dict_and_csv(tmp_path):
    r = sequence_report([FrameAgreement(1.0, 0.0, 5, 0), FrameAgreement(0.9, 0.1, 5, 1)])
    d = r.to_dict()
    assert set(d) >= {"mean", "std", "median", "min", "n_frames", "worst", "sensor_bias", "per_frame"}
    write_per_frame_csv(r, tmp_path / "a.csv")
    data = np.loadtxt(tmp_path / "a.csv", delimiter=",", skiprows=1)
    assert data.shape == (2, 5)


def test_match_timestamps():
    a = [0, 54_644_808, 109_289_617]
    b = [10_000_000, 60_000_000, 300_000_000]
    assert match_timestamps(a, b) == [(0, 0), (1, 1)]
    assert match_timestamps(a, [500_000_000]) == []


offsets = st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=60)


@given(offsets)
def test_antisymmetry_and_bound(d):
    n = len(d)
    xa = np.asarray(d)
    xb = np.zeros(n)
    ys = YS[:n]
    ab = [(y, a, b) for y, a, b in zip(ys, xa, xb)]
    ba = [(y, b, a) for y, a, b in zip(ys, xa, xb)]
    f1, f2 = frame_agreement(ab), frame_agreement(ba)
    assert f1.delta_x_mean == -f2.delta_x_mean
    assert f1.score == f2.score
    assert f1.score <= 1.0
    # in float64, 1 - d rounds to 1.0 exactly when |d| <= 2**-54
    assert (f1.score == 1.0) == (abs(f1.delta_x_mean) <= 2.0**-54)
