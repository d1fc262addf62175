from .evaluation import (BaselineTrainer, EvalReport, GbtTrainer, MeanTrainer, MlpTrainer,
                         baseline_predict, fold_seed, loocv, score_predictions)
from .features import (TASK1_VARIANTS, TASK3_LAYOUT, Dataset, ScanFixation, task1_dataset,
                       task1_features, task2_dataset, task3_dataset, task3_features)
from .gbt import GbtModel, GbtParams, train_gbt
from .mlp import TASK1_PRESET, TASK2_PRESET, MlpConfig, MlpModel, predict_mlp, train_mlp

__all__ = [
    "BaselineTrainer", "EvalReport", "GbtTrainer", "MeanTrainer", "MlpTrainer", "baseline_predict",
    "fold_seed", "loocv", "score_predictions", "TASK1_VARIANTS", "TASK3_LAYOUT", "Dataset",
    "ScanFixation", "task1_dataset", "task1_features", "task2_dataset", "task3_dataset",
    "task3_features", "GbtModel", "GbtParams", "train_gbt", "TASK1_PRESET", "TASK2_PRESET",
    "MlpConfig", "MlpModel", "predict_mlp", "train_mlp",
]
