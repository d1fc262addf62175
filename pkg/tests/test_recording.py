import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fergaze.recording import (ParticipantMeta, ScreenGeometry, SessionFormatError,
                               SessionStructureError, deg_per_px, embedding_dimension,
                               load_face_assets, parse_sample_line, parse_session,
                               samples_kinematics, serialize_session, write_landmarks)
from fergaze.simulator import SimProfile, simulate_session

from helpers import GEOM, constant_xy, recording, session_text, trial_from_xy


def test_sample_line_fields():
    s = parse_sample_line("1000 512.0 384.0 900.0 512.0 384.0 905.0")
    assert s.t_ms == 1000
    assert s.left == (512.0, 384.0, 900.0)
    assert s.right == (512.0, 384.0, 905.0)
    assert s.validity == (True, True)


def test_missing_eye_marks_invalid():
    s = parse_sample_line("1000 . . 0.0 512.0 384.0 905.0")
    assert s.validity == (False, True)


def test_period_boundaries_from_markers():
    rec = parse_session(io.StringIO(session_text()), GEOM)
    (tr,) = rec.trials
    assert [(p.step_index, p.start_ms, p.end_ms) for p in tr.periods] == [
        (1, 0, 10000), (2, 10000, 12000), (3, 12000, 15000)]
    assert [p.duration_ms for p in tr.periods] == [10000, 2000, 3000]
    assert rec.participant.participant_id == "P01"


def test_malformed_numeric_field_names_line():
    text = "MSG 0 TRIALID 1\n1001 51x.0 384.0 900.0 512.0 384.0 905.0\n"
    with pytest.raises(SessionFormatError) as err:
        parse_session(io.StringIO(text), GEOM, duration_tolerance=None)
    assert err.value.lineno == 2
    assert "line 2" in str(err.value) and "field lx not numeric" in str(err.value)


def test_missing_step_marker_names_trial():
    text = session_text().replace("MSG 12000 STEP 3\n", "")
    with pytest.raises(SessionStructureError, match="trial 1: missing STEP 3"):
        parse_session(io.StringIO(text), GEOM)


def test_non_monotone_timestamp_rejected():
    lines = session_text().splitlines()
    lines[5] = lines[5].replace("2 512.0", "1 512.0", 1)
    with pytest.raises(SessionFormatError, match="not after"):
        parse_session(io.StringIO("\n".join(lines)), GEOM)


def test_step_duration_out_of_tolerance():
    with pytest.raises(SessionStructureError, match="step 1 lasts 9000"):
        parse_session(io.StringIO(session_text(n1=9000)), GEOM)
    rec = parse_session(io.StringIO(session_text(n1=9000)), GEOM, duration_tolerance=None)
    assert rec.trials[0].period(1).duration_ms == 9000


def test_invalid_geometry_and_meta():
    with pytest.raises(ValueError, match="sampling_rate_hz"):
        ScreenGeometry(sampling_rate_hz=200)
    with pytest.raises(ValueError, match="positive"):
        ScreenGeometry(viewing_distance_cm=-1)
    with pytest.raises(ValueError, match="drift"):
        ParticipantMeta("P1", drift_error_deg=-0.1)


def test_round_trip_is_byte_exact():
    sim = simulate_session(SimProfile(), n_trials=2, seed=5)
    text = serialize_session(sim.recording)
    again = serialize_session(parse_session(io.StringIO(text), GEOM, sim.manifests))
    assert again == text


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 1100, allow_nan=False), st.floats(-50, 800, allow_nan=False),
                          st.floats(0, 3000, allow_nan=False)), min_size=60, max_size=60))
def test_round_trip_arbitrary_values(rows):
    xy = np.array([r[:2] for r in rows] * 260)[:15200]
    pup = np.array([r[2] for r in rows] * 260)[:15200]
    rec = recording([trial_from_xy(1, 0.0, xy, pupil=pup)])
    text = serialize_session(rec)
    back = parse_session(io.StringIO(text), GEOM)
    assert back.trials[0].samples.equals(rec.trials[0].samples)
    assert serialize_session(back) == text


# --- units ------------------------------------------------------------------

def test_deg_per_px_default_setup():
    # oracle: pixel pitch 36.576/1024 cm viewed from 70 cm
    expected = math.degrees(math.atan(36.576 / 1024 / 70.0))
    dx, dy = deg_per_px(GEOM)
    assert dx == pytest.approx(expected, rel=1e-12)
    assert dx == pytest.approx(0.02924, abs=1e-5)
    assert 1 / dx == pytest.approx(34.2, abs=0.05)
    assert dy == pytest.approx(dx, rel=1e-12)


@given(st.floats(20, 200), st.floats(10, 100))
def test_deg_per_px_monotone_in_distance(d, width):
    near = deg_per_px(ScreenGeometry(physical_size_cm=(width, width * 0.75), viewing_distance_cm=d))[0]
    far = deg_per_px(ScreenGeometry(physical_size_cm=(width, width * 0.75), viewing_distance_cm=2 * d))[0]
    assert far < near
    assert far == pytest.approx(near / 2, rel=1e-3)


def test_deg_per_px_vanishes_at_large_distance():
    assert deg_per_px(ScreenGeometry(viewing_distance_cm=1e9))[0] < 1e-8


# --- kinematics -------------------------------------------------------------

def _series(xy):
    tr = trial_from_xy(1, 0.0, xy)
    return samples_kinematics(tr.period_samples(1), GEOM)


def test_constant_gaze_has_zero_velocity():
    ks = _series(constant_xy(300, 300))
    v = ks.speed()[0][ks.valid[0]]
    assert np.all(v == 0) and np.all(ks.acc_magnitude()[0][ks.valid[0]] == 0)


def test_linear_ramp_velocity():
    # 34.2 px per 100 ms along x is about 10 deg/s
    xy = constant_xy(300, 300)
    xy[:, 0] += 0.342 * np.arange(len(xy))
    ks = _series(xy)
    v = ks.velocity[0][ks.valid[0]]
    expected = 0.342 * 1000 * deg_per_px(GEOM)[0]
    assert np.allclose(v[:, 0], expected, rtol=1e-9)
    assert abs(expected - 10.0) < 0.01
    assert np.allclose(ks.acceleration[0][ks.valid[0]], 0, atol=1e-6)


def test_edge_samples_invalid():
    ks = _series(constant_xy(300, 300))
    n = len(ks)
    assert not ks.valid[:, :2].any() and not ks.valid[:, n - 2:].any()
    # acceleration differentiates velocity again, so 4 samples per edge lose validity
    assert not ks.valid[:, :4].any() and ks.valid[:, 4:n - 4].all()


def test_loss_invalidates_neighbourhood():
    xy = constant_xy(300, 300)
    xy[5200] = np.nan  # period 1 starts 200 samples into the trial
    ks = _series(xy)
    assert not ks.valid[0, 4996:5005].any()
    assert ks.valid[0, 4995] and ks.valid[0, 5005]


@settings(max_examples=25, deadline=None)
@given(st.floats(-200, 200), st.floats(-200, 200), st.integers(0, 2**32 - 1))
def test_kinematics_translation_invariant(dx, dy, seed):
    rng = np.random.default_rng(seed)
    xy = 400 + np.cumsum(rng.normal(0, 0.3, (15200, 2)), axis=0)
    a, b = _series(xy), _series(xy + [dx, dy])
    assert np.array_equal(a.valid, b.valid)
    assert np.allclose(a.velocity[a.valid], b.velocity[b.valid], atol=1e-6)


def test_short_period_warns():
    xy = constant_xy(300, 300, 6)
    tr = trial_from_xy(1, 0.0, xy)
    with pytest.warns(RuntimeWarning, match="shorter than the kinematic window"):
        ks = samples_kinematics(tr.samples, GEOM)
    assert not ks.valid.any()


# --- face assets ------------------------------------------------------------

def _pts(n):
    return [[float(i), float(i)] for i in range(n)]


def test_face_assets_load(tmp_path):
    emb = tmp_path / "emb.csv"
    emb.write_text("F01," + ",".join(["0.5"] * 2622) + "\nF02," + ",".join(["1"] * 2622) + "\n")
    lms, embs = load_face_assets({"F01": _pts(68), "F02": _pts(68)}, emb)
    assert lms["F01"].points.shape == (68, 2)
    assert embedding_dimension(embs) == 2622


def test_face_assets_wrong_count():
    with pytest.raises(ValueError, match="F01: expected 68 landmarks, got 67"):
        load_face_assets({"F01": _pts(67)})


def test_face_assets_ragged_embeddings(tmp_path):
    emb = tmp_path / "emb.csv"
    emb.write_text("F01,1,2,3\nF02,1,2\n")
    with pytest.raises(ValueError, match="ragged"):
        load_face_assets({"F01": _pts(68)}, emb)


def test_landmarks_write_round_trip(tmp_path):
    lms, _ = load_face_assets({"_image_size": [180, 220], "F01": _pts(68)})
    write_landmarks(lms, tmp_path / "lm.json")
    again, _ = load_face_assets(json.loads((tmp_path / "lm.json").read_text()))
    assert again["F01"].image_size == (180.0, 220.0)
    assert np.array_equal(again["F01"].points, lms["F01"].points)
