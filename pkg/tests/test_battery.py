import json
from dataclasses import replace

import numpy as np
import pytest

from fergaze.events import (CATEGORICAL_FEATURES, NUMERIC_FEATURES, FeatureRow, build_session_maps,
                            fixation_feature_rows)
from fergaze.simulator import SimProfile, simulate_session
from fergaze.stats import run_analysis_battery
from fergaze.stats.battery import ANOVA_FACTORS, CHI_SQUARE_FACTORS, INSUFFICIENT

EMOS = ("angry", "fear", "happy", "sad")
REGIONS = ("left-eye", "nose", "mouth", "jaw")
GROUP = {"left-eye": "eye", "nose": "nose", "mouth": "mouth", "jaw": "mouth"}


def _rows(n=80, seed=0, pupil=None):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        region = REGIONS[i % 4]
        step = 1 + i % 3
        out.append(FeatureRow(
            f"P{i % 2}", i // 3, step, 1 + i % 7,
            pupil(step) if pupil else float(rng.normal(900, 10)),
            float(rng.uniform(0, 4)), float(rng.uniform(0, 3)), float(rng.uniform(0, 20)),
            float(rng.uniform(100, 600)), EMOS[(i // 4) % 4], region, EMOS[(i // 2) % 4], GROUP[region]))
    return out


def test_report_shape_and_names():
    rep = run_analysis_battery(_rows())
    assert len(rep.anova) == 6 * 5
    assert len(rep.chi_square) == 10
    assert {c.variable for c in rep.anova} == set(NUMERIC_FEATURES)
    assert {c.category for c in rep.anova} == set(ANOVA_FACTORS)
    assert set(ANOVA_FACTORS) | set(CHI_SQUARE_FACTORS) <= set(CATEGORICAL_FEATURES)
    assert rep.anova[0].alpha_adjusted == pytest.approx(0.05 / 6)
    assert rep.chi_square[0].alpha_adjusted == pytest.approx(0.005)


def test_constant_variable_gives_zero_f():
    rep = run_analysis_battery(_rows(pupil=lambda step: 900.0))
    cell = rep.anova_cell("Average pupil size", "Emotions")
    assert (cell.statistic, cell.p_value, cell.significant) == (0.0, 1.0, False)


def test_planted_pupil_effect_is_flagged():
    rows = _rows(pupil=lambda step: 900.0 + 40.0 * step + np.random.default_rng(step).normal(0, 1))
    rep = run_analysis_battery(rows)
    assert rep.anova_cell("Average pupil size", "Interest Period Index").significant


def test_single_level_marked_insufficient():
    rows = [replace(r, participant_id="P0") for r in _rows()]
    rep = run_analysis_battery(rows)
    cell = rep.anova_cell("Fixation duration", "Participant ID")
    assert cell.note == INSUFFICIENT and cell.statistic is None and not cell.significant


def test_none_sentinels_left_out_of_face_tests():
    rows = _rows()
    rows += [replace(r, emotion_of_fixated_face="none", roi_label="none", face_region="none",
                     fixation_duration_ms=5000.0) for r in rows[:20]]
    with_none = run_analysis_battery(rows).anova_cell("Fixation duration", "RoI Label")
    without = run_analysis_battery(_rows()).anova_cell("Fixation duration", "RoI Label")
    assert with_none.statistic == without.statistic


def test_report_serializations():
    rep = run_analysis_battery(_rows())
    obj = json.loads(rep.to_json())
    assert len(obj["anova"]) == 30 and len(obj["chi_square"]) == 10
    csv_lines = rep.anova_csv().splitlines()
    assert csv_lines[0] == "# fergaze:anova/v1" and len(csv_lines) == 32
    assert rep.chi_square_csv().splitlines()[1].startswith("Variable,Category,Chi-Square")


def test_simulated_pupil_by_step_is_significant():
    sim = simulate_session(SimProfile(), n_trials=12, seed=8)
    rows = fixation_feature_rows(sim.recording, build_session_maps(sim.recording, sim.landmarks))
    rep = run_analysis_battery(rows)
    assert rep.anova_cell("Average pupil size", "Interest Period Index").significant
