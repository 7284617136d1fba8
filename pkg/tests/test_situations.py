import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from avmtbf.errors import DataError, SchemaVersionError, ValidationError
from avmtbf.kinematics import FollowState, ttc, ttc_array
from avmtbf.situations import (
    DrivingMode,
    Recording,
    SituationTable,
    TrackFrame,
    classify_mode,
    convergence_report,
    count_situations,
    extract_situation_table,
    ingest_tracks,
    read_tracks,
    rear_follower_probability,
    speed_distribution,
    write_recording,
)
from avmtbf.synthetic import PlantedSituations, convoy, generate_recordings
from avmtbf.units import SpeedRangePartition, kmh_to_ms

HIGHWAY = SpeedRangePartition.from_kmh([80, 100, 130, 180])
PLANTED = PlantedSituations(
    speed_probability=(0.234, 0.640, 0.126),
    decelerating=(0.028, 0.021, 0.023),
    accelerating_close=(0.001, 0.003, 0.004),
    constant_close=(0.279, 0.152, 0.088),
    accelerating_far=(0.05, 0.1, 0.2),
    constant_far=(0.2, 0.2, 0.2),
)


def test_classify_mode():
    assert classify_mode(0.5, 0.1) is DrivingMode.ACCELERATING
    assert classify_mode(0.0, 0.3) is DrivingMode.CONSTANT
    assert classify_mode(-0.05, 0.1) is DrivingMode.CONSTANT
    assert classify_mode(-0.5, 0.1) is DrivingMode.DECELERATING
    with pytest.raises(ValidationError):
        classify_mode(0.0, 0.0)


@given(st.floats(0, 100), st.floats(0, 60), st.floats(0, 60), st.floats(0, 4))
def test_ttc_array_matches_scalar(gap, vr, vf, a):
    assert ttc_array(np.array([gap]), np.array([vr]), np.array([vf]), a)[0] == ttc(FollowState(vr, vf, gap), a)


def _one_frame(ego_speed, lead_speed=None, lead_accel=0.0, gap=20.0):
    frames = [TrackFrame(0, 1, 1, 0.0, ego_speed, 0.0, 2 if lead_speed is not None else None, 4.5)]
    if lead_speed is not None:
        frames.append(TrackFrame(0, 2, 1, gap + 4.5, lead_speed, lead_accel, None, 4.5))
    return Recording.from_frames("r", 25.0, frames)


def test_decelerating_lead_counts_regardless_of_distance():
    rec = _one_frame(kmh_to_ms(90), lead_speed=kmh_to_ms(50), lead_accel=-2.0, gap=500.0)
    c = count_situations(rec, HIGHWAY, ego_ids=[1])
    assert list(c.decelerating) == [1, 0, 0]


def test_constant_lead_needs_slower_and_close():
    slow_close = _one_frame(kmh_to_ms(90), kmh_to_ms(60), 0.0, 20.0)
    fast_close = _one_frame(kmh_to_ms(90), kmh_to_ms(95), 0.0, 20.0)
    slow_far = _one_frame(kmh_to_ms(90), kmh_to_ms(60), 0.0, 200.0)
    assert count_situations(slow_close, HIGHWAY, ego_ids=[1]).constant_close[0] == 1
    assert count_situations(fast_close, HIGHWAY, ego_ids=[1]).constant_close[0] == 0
    assert count_situations(slow_far, HIGHWAY, ego_ids=[1]).constant_close[0] == 0


def test_ttc_limit_is_inclusive():
    # equal speeds are never "slower", so use a lead just below ego with gap at TTC == 5 s
    v, dv = kmh_to_ms(90), 1.0
    gap = 0.5 * 2.0 * 25 + dv * 5
    rec = _one_frame(v, v - dv, 0.0, gap)
    assert ttc(FollowState(v, v - dv, gap), 2.0) == pytest.approx(5.0)
    assert count_situations(rec, HIGHWAY, ego_ids=[1], ttc_limit=5.0).constant_close[0] == 1


def test_all_decelerating_gives_ps_one():
    frames = []
    for f in range(20):
        frames.append(TrackFrame(f, 1, 1, 0.0, kmh_to_ms(110), 0.0, 2, 4.5))
        frames.append(TrackFrame(f, 2, 1, 30.0, kmh_to_ms(50), -3.0, None, 4.5))
    table = extract_situation_table([Recording.from_frames("r", 25.0, frames)], HIGHWAY)
    assert table.total[1] == 1.0
    assert table.speed_probability == (0.0, 1.0, 0.0)


def test_dangling_reference_is_skipped_and_reported():
    rec = Recording.from_frames("r", 25.0, [TrackFrame(0, 1, 1, 0.0, kmh_to_ms(90), 0.0, 99, 4.5),
                                              TrackFrame(0, 3, 1, 0.0, kmh_to_ms(90), 0.0, None, 4.5)])
    t = extract_situation_table([rec], HIGHWAY)
    assert t.counts.dangling_references == 1
    assert int(t.counts.frames.sum()) == 1


def test_table_reproduction_from_published_terms():
    t = SituationTable(HIGHWAY, (0.234, 0.640, 0.126), (0.028, 0.021, 0.023), (0.001, 0.003, 0.004), (0.279, 0.152, 0.088))
    assert t.total[0] == pytest.approx(0.308)
    assert t.total[1] == pytest.approx(0.176)
    assert t.total[2] == pytest.approx(0.115)
    assert SituationTable.from_dict(t.to_dict()) == t
    assert "0.176" in t.to_text()


def test_table_validation():
    with pytest.raises(ValidationError):
        SituationTable(HIGHWAY, (0.5, 0.5), (0,) * 3, (0,) * 3, (0,) * 3)
    with pytest.raises(ValidationError):
        SituationTable(HIGHWAY, (0.2, 0.3, 0.5), (1.2, 0, 0), (0,) * 3, (0,) * 3)
    doc = SituationTable(HIGHWAY, (0.2, 0.3, 0.5), (0,) * 3, (0,) * 3, (0,) * 3).to_dict()
    doc["version"] = 7
    with pytest.raises(SchemaVersionError):
        SituationTable.from_dict(doc)


def test_speed_distribution_one_hot_and_uniform():
    rec = _one_frame(kmh_to_ms(120))
    assert speed_distribution([rec], HIGHWAY) == (0.0, 1.0, 0.0)
    speeds = kmh_to_ms(np.arange(80, 180, 0.01) + 0.005)
    frames = [TrackFrame(0, k, 1, 0.0, float(v), 0.0, None) for k, v in enumerate(speeds)]
    p = speed_distribution([Recording.from_frames("u", 25, frames)], HIGHWAY)
    assert p == pytest.approx((0.2, 0.3, 0.5), abs=1e-9)


def test_speed_distribution_all_out_of_range():
    with pytest.raises(DataError):
        speed_distribution([_one_frame(kmh_to_ms(30))], HIGHWAY)


def test_mode_cells_partition_frames_with_lead():
    recs = generate_recordings(PLANTED, HIGHWAY, 5000, seed=3)
    c = count_situations(recs[0], HIGHWAY)
    assert np.array_equal(c.decelerating + c.accelerating + c.constant, c.with_lead)


def test_shard_order_does_not_matter():
    recs = generate_recordings(PLANTED, HIGHWAY, 6000, n_recordings=4, seed=9)
    a = extract_situation_table(recs, HIGHWAY)
    b = extract_situation_table(recs[::-1], HIGHWAY)
    assert a.to_dict() == b.to_dict()
    for i, tot in enumerate(a.total):
        assert tot == a.decelerating[i] + a.accelerating_close[i] + a.constant_close[i]
    assert sum(a.speed_probability) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_probability_bounds(seed):
    t = extract_situation_table(generate_recordings(PLANTED, HIGHWAY, 800, seed=seed), HIGHWAY)
    for vals in (t.speed_probability, t.decelerating, t.accelerating_close, t.constant_close, t.total):
        assert all(0.0 <= v <= 1.0 for v in vals)


def test_rear_follower_examples():
    assert rear_follower_probability([_one_frame(kmh_to_ms(100))], HIGHWAY) == (0.0, 0.0, 0.0)
    rec = convoy(gap=25.0, speed=kmh_to_ms(110))
    assert rear_follower_probability([rec], HIGHWAY, ego_ids=[1])[1] == 1.0
    assert rear_follower_probability([rec], HIGHWAY)[1] == 0.5
    far = convoy(gap=25.5, speed=kmh_to_ms(110))
    assert rear_follower_probability([far], HIGHWAY, ego_ids=[1])[1] == 0.0


def test_rear_follower_material_on_synthetic_traffic():
    recs = generate_recordings(PLANTED, HIGHWAY, 3000, seed=1)
    # leads are out of range, egos have no followers: probability is 0 over egos
    assert rear_follower_probability(recs, HIGHWAY) == (0.0, 0.0, 0.0)


def test_convergence_report_examples():
    rec = generate_recordings(PLANTED, HIGHWAY, 2000, seed=2)[0]
    rows = convergence_report([rec, rec, rec], HIGHWAY)
    assert [r["ks_cumulative"] for r in rows] == [0.0, 0.0]
    lo = Recording.from_frames("lo", 25, [TrackFrame(0, k, 1, 0, kmh_to_ms(85 + k * 0.1), 0, None) for k in range(50)])
    hi = Recording.from_frames("hi", 25, [TrackFrame(0, k, 1, 0, kmh_to_ms(150 + k * 0.1), 0, None) for k in range(50)])
    (row,) = convergence_report([lo, hi], HIGHWAY)
    assert row["ks_increment"] == 1.0
    assert row["ks_cumulative"] == pytest.approx(0.5)
    with pytest.raises(DataError):
        convergence_report([lo], HIGHWAY)


def test_convergence_decreases_over_random_split():
    recs = generate_recordings(PLANTED, HIGHWAY, 40_000, n_recordings=20, seed=4)
    ks = [r["ks_cumulative"] for r in convergence_report(recs, HIGHWAY)]
    assert np.mean(ks[-5:]) < np.mean(ks[:5])
    assert np.corrcoef(np.arange(len(ks)), ks)[0, 1] < 0


def test_ingest_roundtrip(tmp_path):
    recs = generate_recordings(PLANTED, HIGHWAY, 1000, n_recordings=3, seed=5)
    for r in recs:
        write_recording(r, tmp_path)
    back = ingest_tracks(tmp_path)
    assert len(back) == 3
    assert extract_situation_table(back, HIGHWAY).to_dict() == extract_situation_table(recs, HIGHWAY).to_dict()
    one = read_tracks(tmp_path / "01_tracks.csv")
    frames = list(one.iter_frames())
    assert [f.frame_index for f in frames] == sorted(f.frame_index for f in frames)


def test_ingest_negative_direction(tmp_path):
    pd.DataFrame({"frame": [0, 0], "id": [1, 2], "laneId": [2, 2], "x": [100.0, 70.0], "xVelocity": [-30.0, -30.0],
                  "xAcceleration": [0.5, 0.0], "precedingId": [0, 1], "width": [4.0, 4.0]}).to_csv(tmp_path / "07_tracks.csv", index=False)
    pd.DataFrame({"frameRate": [25]}).to_csv(tmp_path / "07_recordingMeta.csv", index=False)
    (rec,) = ingest_tracks(tmp_path)
    t = rec.tracks.set_index("id")
    assert t.loc[1, "speed"] == 30.0 and t.loc[1, "accel"] == -0.5
    assert t.loc[1, "pos"] - t.loc[2, "pos"] == pytest.approx(-30.0)


def test_ingest_errors(tmp_path):
    good = "frame,id,laneId,x,xVelocity,xAcceleration,precedingId,width\n0,1,1,0,30,0,0,4\n"
    (tmp_path / "a_tracks.csv").write_text(good.replace(",precedingId", "").replace(",0,4\n", ",4\n"))
    (tmp_path / "a_recordingMeta.csv").write_text("frameRate\n25\n")
    with pytest.raises(DataError, match="precedingId"):
        read_tracks(tmp_path / "a_tracks.csv")
    (tmp_path / "a_tracks.csv").write_text(good + "1,1,1,abc,30,0,0,4\n")
    with pytest.raises(DataError, match="line 3, column x"):
        read_tracks(tmp_path / "a_tracks.csv")
    (tmp_path / "a_tracks.csv").write_text("")
    with pytest.raises(DataError, match="empty"):
        read_tracks(tmp_path / "a_tracks.csv")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(DataError, match="no recordings"):
        ingest_tracks(empty)
