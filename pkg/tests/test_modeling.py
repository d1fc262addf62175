from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fergaze.aoi import EMOTIONS, REGIONS
from fergaze.events import FeatureRow
from fergaze.modeling import (TASK1_PRESET, TASK2_PRESET, BaselineTrainer, Dataset, GbtParams,
                              GbtTrainer, MeanTrainer, MlpConfig, MlpModel, MlpTrainer, ScanFixation,
                              baseline_predict, loocv, predict_mlp, score_predictions, task1_features,
                              task3_dataset, task3_features, train_gbt, train_mlp)
from fergaze.modeling.features import TASK1_DIMS
from fergaze.modeling.gbt import GbtModel
from fergaze.modeling.mlp import target_weights, weighted_mse

from helpers import fd_gradient_error, fixture_manifest

MAN = fixture_manifest(target=2)


def _data(n=12, d=6, k=4, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), rng.uniform(0, 1, size=(n, k)), rng.integers(0, k, n)


# --- baseline ----------------------------------------------------------------

def test_baseline_values():
    assert list(baseline_predict(3, 0)) == [0.50, 0.1666, 0.1666, 0.1666]
    assert list(baseline_predict(1)) == [0.25] * 4
    for t in range(4):
        assert list(baseline_predict(3, t)) == list(np.roll(baseline_predict(3, 0), t))
    with pytest.raises(ValueError):
        baseline_predict(3, 4)
    with pytest.raises(ValueError):
        baseline_predict(2, 0)


def test_baseline_mse_on_two_trial_fixture():
    truth = np.array([[0.4, 0.2, 0.1, 0.1], [0.1, 0.1, 0.1, 0.6]])
    ti = np.array([0, 3])
    pred = BaselineTrainer(3).fit_predict(None, None, None, truth, ti, 0)
    hand = ((0.1 ** 2 + 0.0334 ** 2 + 0.0666 ** 2 * 2) + (0.0666 ** 2 * 3 + 0.1 ** 2)) / 8
    mse, tmse = score_predictions(pred, truth, ti)
    assert mse == pytest.approx(hand, rel=1e-12)
    assert tmse == pytest.approx(0.1 ** 2, rel=1e-12)


# --- MLP ---------------------------------------------------------------------

def test_presets_and_config_validation():
    assert (TASK1_PRESET.layers, TASK1_PRESET.learning_rate, TASK1_PRESET.epochs) == ((32, 16, 4), 0.001, 500)
    assert (TASK2_PRESET.layers, TASK2_PRESET.learning_rate, TASK2_PRESET.epochs) == ((100, 16, 4), 0.001, 1000)
    for bad in ({"layers": (4,)}, {"learning_rate": 0.0}, {"epochs": -1}, {"optimizer": "sgd"},
                {"layers": (0, 4)}):
        with pytest.raises(ValueError):
            MlpConfig(**bad)


@pytest.mark.parametrize("preset,d", [(TASK1_PRESET, 60), (TASK2_PRESET, 40)])
def test_gradient_matches_finite_differences(preset, d):
    X, Y, ti = _data(n=10, d=d, seed=d)
    W = target_weights(ti, 4, 2.0)
    model = train_mlp(replace(preset, epochs=30, learning_rate=0.01), X, Y, W)
    assert fd_gradient_error(model, X, Y, W) <= 1e-4


def test_loss_matches_objective_and_decreases():
    X, Y, ti = _data()
    W = target_weights(ti)
    model = train_mlp(MlpConfig((16, 4), 0.01, 200), X, Y, W)
    assert model.loss_trace[-1] < model.loss_trace[0]
    from fergaze.modeling.mlp import loss_and_grad
    assert loss_and_grad(model, X, Y, W)[0] == pytest.approx(weighted_mse(model, X, Y, W), rel=1e-12)


def test_epochs_zero_keeps_initial_weights():
    X, Y, _ = _data()
    a = train_mlp(MlpConfig((8, 4), epochs=0, seed=5), X, Y)
    b = train_mlp(MlpConfig((8, 4), epochs=0, seed=5), X, Y)
    c = train_mlp(MlpConfig((8, 4), epochs=3, seed=5), X, Y)
    assert a.loss_trace.size == 0
    assert all(np.array_equal(u, v) for u, v in zip(a.weights, b.weights))
    assert not np.array_equal(a.weights[0], c.weights[0])
    assert all(not b_.any() for b_ in a.biases)


def test_non_finite_data_rejected():
    X, Y, _ = _data()
    X[3, 2] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        train_mlp(MlpConfig((8, 4)), X, Y)
    X, Y, _ = _data()
    Y[0, 0] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        train_mlp(MlpConfig((8, 4)), X, Y)
    with pytest.raises(ValueError, match="outputs"):
        train_mlp(MlpConfig((8, 3)), X, Y)


def test_zero_model_outputs_zero_and_clamps():
    X, Y, _ = _data()
    m = train_mlp(MlpConfig((8, 4), epochs=0), X, Y)
    for W in m.weights:
        W[:] = 0.0
    assert not predict_mlp(m, X).any()
    m.biases[-1][:] = [1.3, -0.2, 0.5, 1.0]
    assert predict_mlp(m, X[:1]).tolist() == [[1.0, 0.0, 0.5, 1.0]]
    with pytest.raises(ValueError, match="input width"):
        predict_mlp(m, X[:, :3])


def test_training_and_prediction_deterministic():
    X, Y, ti = _data()
    cfg = MlpConfig((8, 4), 0.01, 50, seed=3)
    a, b = train_mlp(cfg, X, Y, target_weights(ti)), train_mlp(cfg, X, Y, target_weights(ti))
    assert a.to_json() == b.to_json()
    assert np.array_equal(a.predict(X), a.predict(X))


def test_mlp_json_round_trip():
    X, Y, _ = _data()
    m = train_mlp(MlpConfig((8, 4), 0.01, 20), X, Y)
    back = MlpModel.from_json(m.to_json())
    assert np.array_equal(back.predict(X), m.predict(X))
    assert back.config == m.config
    with pytest.raises(ValueError, match="format"):
        MlpModel.from_json('{"format": "other"}')


def test_target_weights():
    W = target_weights([2, 0], 4, 3.0)
    assert W.tolist() == [[1, 1, 3, 1], [3, 1, 1, 1]]


def test_float32_close_to_float64():
    X, Y, _ = _data()
    a = train_mlp(MlpConfig((8, 4), 0.01, 100), X, Y)
    b = train_mlp(MlpConfig((8, 4), 0.01, 100, dtype="float32"), X, Y)
    assert np.abs(a.predict(X) - b.predict(X)).max() < 1e-3


# --- boosted trees -----------------------------------------------------------

def test_gbt_constant_target():
    X, _, _ = _data()
    m = train_gbt(X, np.full(len(X), 0.7))
    assert m.trees == [] and np.all(m.predict(X) == 0.7)


def test_gbt_depth_zero_predicts_mean():
    X, Y, _ = _data()
    m = train_gbt(X, Y[:, 0], GbtParams(n_trees=1, max_depth=0, learning_rate=1.0))
    assert np.allclose(m.predict(X), Y[:, 0].mean(), rtol=0, atol=1e-15)


def test_gbt_planted_linear_function():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(120, 5))
    y = 2 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2]
    m = train_gbt(X, y)
    assert len(m.trees) == 100
    assert m.train_mse[-1] < 0.01 * y.var()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 30), st.integers(0, 4))
def test_gbt_train_mse_non_increasing(seed, n, depth):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(n, 3)), rng.normal(size=n)
    mse = train_gbt(X, y, GbtParams(n_trees=15, max_depth=depth, seed=seed)).train_mse
    assert all(b <= a + 1e-12 for a, b in zip(mse, mse[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.randoms())
def test_gbt_invariant_to_row_order(seed, rnd):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(20, 4)), rng.normal(size=20)
    X[:5, 1] = X[5:10, 1]  # repeated values exercise the tie rules
    perm = list(range(20))
    rnd.shuffle(perm)
    p = GbtParams(n_trees=10, subsample=0.8, seed=seed)
    a, b = train_gbt(X, y, p), train_gbt(X[perm], y[perm], p)
    assert np.array_equal(a.predict(X), b.predict(X))


def test_gbt_errors_and_json():
    X, Y, _ = _data()
    with pytest.raises(ValueError):
        train_gbt(X[:1], Y[:1, 0])
    with pytest.raises(ValueError, match="non-finite"):
        train_gbt(np.where(X > 1, np.inf, X), Y[:, 0])
    with pytest.raises(ValueError):
        GbtParams(learning_rate=0)
    m = train_gbt(X, Y[:, 0], GbtParams(n_trees=5))
    back = GbtModel.from_json(m.to_json())
    assert np.array_equal(back.predict(X), m.predict(X))


# --- features ----------------------------------------------------------------

def test_task1_dimensions_and_emotion_block():
    scan = [ScanFixation("face1", 100, 300, *MAN.faces[1].rect_step1.center)]
    for variant, dim in TASK1_DIMS.items():
        v = task1_features(scan, MAN, variant)
        assert v.shape == (dim,)
        emo = v[-30:].reshape(5, 6)
        assert [EMOTIONS[i] for i in emo.argmax(axis=1)] == [f.emotion for f in MAN.faces] + [MAN.target_emotion]
    with pytest.raises(ValueError):
        task1_features(scan, MAN, "bogus")


def test_task1_all_dwell_on_one_face():
    cx, cy = MAN.faces[2].rect_step1.center
    scan = [ScanFixation("face2", 0, 6000, cx, cy), ScanFixation("face2", 6000, 4000, cx, cy)]
    v = task1_features(scan, MAN, "spatial")
    assert v[:4].tolist() == [0, 0, 1, 0]
    assert not v[4:12].any() and v[12:14].tolist() == [0, 0]


def test_task1_temporal_block():
    r = MAN.faces[0].rect_step1
    scan = [ScanFixation("face0", 500, 200, r.x, r.y), ScanFixation("word", 800, 100, 512, 384),
            ScanFixation("face0", 1000, 400, r.x, r.y)]
    v = task1_features(scan, MAN, "temporal")
    assert v[:4].tolist() == [2, 0, 0, 0]
    assert v[4] == pytest.approx(0.3)
    assert v[8:12].tolist() == [0.5, 10.0, 10.0, 10.0]  # never-fixated faces get the step length
    assert v[12:16].tolist() == [1, 0, 0, 0]
    sp = task1_features(scan, MAN, "spatial")
    assert sp[4:6].tolist() == [-0.5, -0.5]


def test_task1_empty_trial():
    v = task1_features([], MAN, "spatiotemporal")
    assert v.shape == (60,)
    assert v[13] == 1.0 and not v[:13].any()


def _row(emo, region, rate, pupil, step=1):
    return FeatureRow("P", 1, step, 1, pupil, 0.0, rate, 0.0, 200.0, emo, region, emo, "eye")


def test_task3_features_layout_and_mask():
    rows = [_row("fear", "nose", 2.0, 900.0), _row("fear", "nose", 4.0, 910.0),
            _row("happy", "jaw", 1.0, 880.0), _row("happy", "jaw", 9.0, 999.0, step=3),
            _row("none", "none", 5.0, 700.0)]
    v, mask = task3_features(rows)
    assert v.shape == mask.shape == (84,)
    i = (EMOTIONS.index("fear") * len(REGIONS) + REGIONS.index("nose")) * 2
    assert v[i:i + 2].tolist() == [3.0, 905.0]
    j = (EMOTIONS.index("happy") * len(REGIONS) + REGIONS.index("jaw")) * 2
    assert v[j:j + 2].tolist() == [1.0, 880.0]
    assert mask.sum() == 4 and not v[~mask].any()
    ds = task3_dataset({"A": rows, "B": rows[:1], "C": rows}, {"A": 1.0, "B": 2.0, "Z": 0.0})
    assert ds.keys == ["A", "B"] and ds.X.shape == (2, 84) and ds.Y.tolist() == [[1.0], [2.0]]


# --- leave-one-out -----------------------------------------------------------

def _ds(n=9, seed=0):
    X, Y, ti = _data(n=n, seed=seed)
    return Dataset(X, Y, list(range(n)), ti, layout="test")


def test_loocv_mean_predictor_analytic():
    ds = _ds(11)
    rep = loocv(ds, MeanTrainer())
    n = len(ds)
    assert rep.n_folds == n
    assert rep.mse == pytest.approx(np.mean(ds.Y.var(axis=0, ddof=1)) * n / (n - 1), rel=1e-12)


def test_loocv_requires_three_rows():
    with pytest.raises(ValueError, match="at least 3"):
        loocv(_ds(2), MeanTrainer())


def test_loocv_deterministic_and_batched_matches_folds():
    ds = _ds(7)
    tr = MlpTrainer(MlpConfig((8, 4), 0.01, 40))
    a, b = loocv(ds, tr, seed=4), loocv(ds, tr, seed=4)
    assert a.to_json() == b.to_json()
    c = loocv(ds, tr, seed=4, batched=False)
    assert np.allclose(a.predictions, c.predictions, rtol=0, atol=1e-12)
    assert loocv(ds, tr, seed=5).to_json() != a.to_json()


def test_loocv_report_fields():
    ds = Dataset(_ds().X, _ds().Y[:, :1], list("abcdefghi"), layout="task3-v1")
    rep = loocv(ds, GbtTrainer(GbtParams(n_trees=5)), seed=1, with_spearman=True)
    assert rep.target_mse is None and -1 <= rep.spearman_rho <= 1 and 0 <= rep.spearman_p <= 1
    assert rep.folds_csv().splitlines()[0].startswith("# fergaze:eval_folds")
    assert len(rep.folds_csv().splitlines()) == 2 + 9
