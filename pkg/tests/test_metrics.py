from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fergaze.aoi import AoiAssignment, GROUPS
from fergaze.events import FixationEvent, build_session_maps, detect_fixations
from fergaze.metrics import (DwellReport, TrialDwell, dwell_csv, dwell_summary, dwell_table,
                             dwell_time_change, participant_performance, region_distribution,
                             session_dwell)
from fergaze.simulator import DEFAULT_GROUP_WEIGHTS, SimProfile, simulate_session

from helpers import constant_xy, fixture_manifest, recording, trial_from_xy

MAN = fixture_manifest(target=1)
REC = recording([trial_from_xy(1, 0.0, constant_xy(0, 0), manifest=MAN)])


def _fx(step, start, dur, aoi, region="none", group="none", index=1):
    a = AoiAssignment(aoi, aoi == f"face{MAN.target_face_index}", region, group)
    return FixationEvent(1, step, start, start + dur, dur, (0.0, 0.0), index, 900.0, a)


def _td(target, step=1, ti=0, fr=None):
    fractions = {"face0": 0.0, "face1": 0.0, "face2": 0.0, "face3": 0.0, "word": 0.0}
    fractions.update(fr or {})
    fractions[f"face{ti}"] = target
    fractions["none"] = 1 - sum(fractions.values())
    return TrialDwell(1, step, 1000.0, ti, "happy", ("happy", "sad", "fear", "angry"), fractions,
                      tuple(dict.fromkeys(GROUPS, 0.0) for _ in range(4)))


def test_whole_step_on_one_face():
    rep = dwell_table(REC, 3, {1: [_fx(3, 12200, 3000, "face2", "nose", "nose")]})
    fr = rep.trials[1].fractions
    assert fr["face2"] == 1.0
    assert all(v == 0 for k, v in fr.items() if k != "face2")


def test_empty_step_is_all_none():
    rep = dwell_table(REC, 2, {})
    assert rep.trials[1].fractions["none"] == 1.0
    assert sum(rep.trials[1].fractions.values()) == 1.0


def test_fractions_sum_to_one():
    fx = [_fx(1, 200, 2500, "face1", "mouth", "mouth"), _fx(1, 3000, 1000, "word", index=2),
          _fx(1, 5000, 700, "face0", "left-eye", "eye", index=3)]
    td = dwell_table(REC, 1, {1: fx}).trials[1]
    assert sum(td.fractions.values()) == pytest.approx(1.0, abs=1e-9)
    assert td.target == 0.25 and td.word == 0.1
    assert td.nontarget == pytest.approx(0.07 / 3)
    assert td.group_fractions[1]["mouth"] == 0.25


@settings(max_examples=40)
@given(st.lists(st.tuples(st.sampled_from(["face0", "face1", "face2", "face3", "word"]),
                          st.integers(60, 400)), min_size=2, max_size=20),
       st.integers(1, 19))
def test_dwell_is_additive(items, cut):
    cut = min(cut, len(items) - 1)
    fx, t = [], 200
    for k, (aoi, d) in enumerate(items):
        fx.append(_fx(1, t, d, aoi, index=k + 1))
        t += d
    whole = dwell_table(REC, 1, {1: fx}).trials[1].fractions
    a = dwell_table(REC, 1, {1: fx[:cut]}).trials[1].fractions
    b = dwell_table(REC, 1, {1: fx[cut:]}).trials[1].fractions
    for key in ("face0", "face1", "face2", "face3", "word"):
        assert whole[key] == pytest.approx(a[key] + b[key], abs=1e-12)


def test_dtc_examples():
    assert dwell_time_change(_td(0.235), _td(0.409, 3)) == pytest.approx(17.4)
    assert dwell_time_change(_td(0.3), _td(0.3, 3)) == 0.0
    assert dwell_time_change(_td(0.0), _td(1.0, 3)) == 100.0


@given(st.floats(0, 1), st.floats(0, 1))
def test_dtc_antisymmetric_and_bounded(a, b):
    d = dwell_time_change(_td(a), _td(b, 3))
    assert d == -dwell_time_change(_td(b), _td(a, 3))
    assert -100 <= d <= 100


@given(st.permutations([0.1, 0.2, 0.05]))
def test_dtc_ignores_nontarget_labels(vals):
    fr = dict(zip(("face1", "face2", "face3"), vals))
    base = dwell_time_change(_td(0.3, fr={"face1": .1, "face2": .2, "face3": .05}), _td(0.5, 3))
    assert dwell_time_change(_td(0.3, fr=fr), _td(0.5, 3)) == base


def test_region_distribution_degenerate():
    fx = [_fx(1, 200 + 500 * k, 400, f"face{k}", "left-eye", "eye", index=k + 1) for k in range(4)]
    dist = region_distribution([dwell_table(REC, 1, {1: fx})])
    assert set(dist) == {"happy", "sad", "fear", "angry"}
    for shares in dist.values():
        assert shares == {"eye": 1.0, "nose": 0.0, "mouth": 0.0}


def test_region_distribution_splits_and_skips_unseen():
    fx = [_fx(1, 200, 400, "face1", "nose", "nose"), _fx(1, 700, 400, "face1", "jaw", "mouth", 2),
          _fx(1, 1200, 300, "face3", "right-eyebrow", "eye", 3)]
    rep = dwell_table(REC, 1, {1: fx})
    target = region_distribution([rep], "target")
    assert target == {"sad": {"eye": 0.0, "nose": 0.5, "mouth": 0.5}}
    assert region_distribution([rep], "non-target") == {"angry": {"eye": 1.0, "nose": 0.0, "mouth": 0.0}}
    with pytest.raises(ValueError):
        region_distribution([rep], "other")


def test_performance_examples():
    def reps(pairs):
        r1, r3 = DwellReport(1), DwellReport(3)
        for tid, (a, b) in enumerate(pairs, start=1):
            r1.trials[tid] = replace(_td(a), trial_id=tid)
            r3.trials[tid] = replace(_td(b, 3), trial_id=tid)
        return {1: r1, 3: r3}
    one = participant_performance({"P": reps([(0.235, 0.409)])})["P"]
    assert one.mean_dtc == pytest.approx(17.4) and one.n_trials == 1
    two = participant_performance({"P": reps([(0.2, 0.3), (0.3, 0.2)])})["P"]
    assert two.mean_dtc == pytest.approx(0.0, abs=1e-12)
    assert two.per_emotion == {"happy": pytest.approx(0.0, abs=1e-12)}
    with pytest.raises(ValueError, match="no scored trials"):
        participant_performance({"P": {1: DwellReport(1), 3: DwellReport(3)}})


def test_dwell_csv_layout():
    sim = simulate_session(SimProfile(), n_trials=6, seed=2)
    fx = detect_fixations(sim.recording, build_session_maps(sim.recording, sim.landmarks))
    rows = dwell_summary({"S01": session_dwell(sim.recording, fx)})
    text = dwell_csv(rows)
    assert text.startswith("# fergaze:dwell/v1\n")
    header = text.splitlines()[1]
    assert header.startswith("emotion,n_trials,step1_target")
    assert header.endswith("dtc")
    assert rows[-1]["emotion"] == "avg" and rows[-1]["n_trials"] == 6


# --- simulator round trips ----------------------------------------------------

def test_fear_eye_weight_round_trip():
    weights = dict(DEFAULT_GROUP_WEIGHTS)
    weights["fear"] = (0.8, 0.1, 0.1)
    sim = simulate_session(replace(SimProfile(), group_weights=weights), n_trials=24, seed=3)
    fx = detect_fixations(sim.recording, build_session_maps(sim.recording, sim.landmarks))
    dist = region_distribution([session_dwell(sim.recording, fx)[1]])
    eye = {emo: d["eye"] for emo, d in dist.items()}
    assert max(eye, key=eye.get) == "fear"


@pytest.mark.slow
def test_per_emotion_performance_ordering():
    prof = replace(SimProfile.from_dict({"preset": "emotion-dwell"}), salience_concentration=200.0)
    sim = simulate_session(prof, n_trials=360, seed=1)
    fx = detect_fixations(sim.recording, build_session_maps(sim.recording, sim.landmarks))
    perf = participant_performance({"S": session_dwell(sim.recording, fx)})["S"]
    ranked = sorted(perf.per_emotion, key=perf.per_emotion.get)
    assert ranked[0] == "fear"
    assert "happy" in ranked[-2:]
    assert np.all(np.abs(list(perf.trial_dtc.values())) <= 100)
