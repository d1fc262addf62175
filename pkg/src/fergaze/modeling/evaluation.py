"""Baseline predictor, trainer adapters and the leave-one-out harness."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from ..stats import spearman
from ..tables import format_csv
from .features import Dataset
from .gbt import GbtParams, train_gbt
from .mlp import MlpConfig, predict_mlp, target_weights, train_mlp, train_stack

BASELINE_TARGET = 0.50
BASELINE_OTHER = 0.1666
REPORT_FORMAT = "fergaze-eval/v1"


def baseline_predict(step: int, target_index: int | None = None) -> np.ndarray:
    """Fixed guess: equal split over the four faces in step 1, target-heavy in step 3."""
    if step == 1:
        return np.full(4, 0.25)
    if step == 3:
        if target_index is None or not 0 <= target_index < 4:
            raise ValueError(f"step 3 needs a target index in 0..3, got {target_index}")
        out = np.full(4, BASELINE_OTHER)
        out[target_index] = BASELINE_TARGET
        return out
    raise ValueError(f"baseline is defined for steps 1 and 3, got {step}")


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


class Trainer(Protocol):
    name: str

    def fit_predict(self, X_train, Y_train, ti_train, X_test, ti_test, seed: int) -> np.ndarray: ...


@dataclass
class BaselineTrainer:
    step: int = 3
    name: str = "baseline"

    def fit_predict(self, X_train, Y_train, ti_train, X_test, ti_test, seed):
        if self.step == 1:
            return np.tile(baseline_predict(1), (len(X_test), 1))
        return np.array([baseline_predict(3, int(t)) for t in ti_test])


@dataclass
class MeanTrainer:
    """Predicts the training-set mean of every output."""

    name: str = "mean"

    def fit_predict(self, X_train, Y_train, ti_train, X_test, ti_test, seed):
        return np.tile(np.mean(Y_train, axis=0), (len(X_test), 1))


@dataclass
class MlpTrainer:
    config: MlpConfig
    w_target: float = 2.0
    name: str = "mlp"

    def _weights(self, ti, n):
        if ti is None:
            return None
        return target_weights(ti, self.config.n_outputs, self.w_target)

    def fit_predict(self, X_train, Y_train, ti_train, X_test, ti_test, seed):
        model = train_mlp(replace(self.config, seed=seed), X_train, Y_train,
                          self._weights(ti_train, len(X_train)))
        return predict_mlp(model, X_test)

    def loo_predict(self, ds: Dataset, seeds: Sequence[int]) -> np.ndarray:
        """All folds trained as one stack; fold ``i`` masks out row ``i``."""
        n = len(ds)
        models = train_stack(self.config, ds.X, ds.Y, self._weights(ds.target_index, n),
                             1.0 - np.eye(n), seeds)
        return np.array([predict_mlp(m, ds.X[i:i + 1])[0] for i, m in enumerate(models)])


@dataclass
class GbtTrainer:
    params: GbtParams = GbtParams()
    name: str = "gbt"

    def fit_predict(self, X_train, Y_train, ti_train, X_test, ti_test, seed):
        Y_train = np.asarray(Y_train)
        cols = []
        for j in range(Y_train.shape[1]):
            m = train_gbt(X_train, Y_train[:, j], replace(self.params, seed=seed))
            cols.append(m.predict(X_test))
        return np.column_stack(cols)


@dataclass
class EvalReport:
    model: str
    layout: str
    seed: int
    keys: list
    predictions: np.ndarray
    truths: np.ndarray
    target_index: np.ndarray | None
    mse: float
    target_mse: float | None
    spearman_rho: float | None = None
    spearman_p: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def n_folds(self) -> int:
        return len(self.keys)

    def to_json(self) -> str:
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else v
        return json.dumps({
            "format": REPORT_FORMAT, "model": self.model, "layout": self.layout, "seed": self.seed,
            "n_folds": self.n_folds, "mse": self.mse, "target_mse": num(self.target_mse),
            "spearman_rho": num(self.spearman_rho), "spearman_p": num(self.spearman_p),
            "keys": [str(k) for k in self.keys], "predictions": self.predictions.tolist(),
            "truths": self.truths.tolist(),
            "target_index": None if self.target_index is None else self.target_index.tolist(),
            **self.extra,
        }, indent=1)

    def folds_csv(self) -> str:
        rows = []
        for i, k in enumerate(self.keys):
            for j in range(self.truths.shape[1]):
                rows.append((k, j, float(self.truths[i, j]), float(self.predictions[i, j])))
        return format_csv("eval_folds", rows)


def score_predictions(pred, truth, target_index=None) -> tuple[float, float | None]:
    """Overall MSE and, when target indices are given, the target-face MSE."""
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    mse = float(np.mean((pred - truth) ** 2))
    if target_index is None:
        return mse, None
    r = np.arange(len(truth))
    ti = np.asarray(target_index, dtype=int)
    return mse, float(np.mean((pred[r, ti] - truth[r, ti]) ** 2))


def loocv(ds: Dataset, trainer, *, seed: int = 0, with_spearman: bool = False,
          batched: bool = True) -> EvalReport:
    """Leave-one-out over the rows of ``ds``.

    Fold ``i`` trains on every other row with seed ``fold_seed(seed, i)``.
    Trainers offering ``loo_predict`` run all folds at once unless ``batched``
    is False.
    """
    n = len(ds)
    if n < 3:
        raise ValueError(f"leave-one-out needs at least 3 rows, got {n}")
    seeds = [fold_seed(seed, i) for i in range(n)]
    ti = ds.target_index
    if batched and hasattr(trainer, "loo_predict"):
        pred = np.asarray(trainer.loo_predict(ds, seeds), dtype=float)
    else:
        pred = np.empty_like(ds.Y, dtype=float)
        for i in range(n):
            tr = np.r_[0:i, i + 1:n]
            pred[i] = trainer.fit_predict(ds.X[tr], ds.Y[tr], None if ti is None else ti[tr],
                                          ds.X[i:i + 1], None if ti is None else ti[i:i + 1],
                                          seeds[i])[0]
    mse, tmse = score_predictions(pred, ds.Y, ti)
    rho = p = None
    if with_spearman:
        res = spearman(pred[:, 0], ds.Y[:, 0])
        rho, p = res.statistic, res.p_value
    return EvalReport(trainer.name, ds.layout, seed, list(ds.keys), pred, np.asarray(ds.Y, float),
                      None if ti is None else np.asarray(ti), mse, tmse, rho, p)
