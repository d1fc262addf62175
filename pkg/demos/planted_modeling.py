"""Leave-one-out comparison of the Task-1 feature variants on planted data.

Step-3 dwell is generated as a fixed function of step-1 fixation counts and
durations, so a model that sees the step-1 dwell directly should do best.

Run from the repository root:  python demos/planted_modeling.py [n_seeds]
"""
import sys
from dataclasses import replace

from fergaze.modeling import TASK1_PRESET, BaselineTrainer, MlpTrainer, loocv
from fergaze.simulator import planted_task1_datasets


def main(n_seeds: str = "5") -> None:
    mlp = MlpTrainer(replace(TASK1_PRESET, dtype="float32"))
    print("seed  spatial  temporal  spatiotemporal  baseline")
    for seed in range(int(n_seeds)):
        ds = planted_task1_datasets(seed)
        mse = {v: loocv(ds[v], mlp, seed=seed).mse for v in ("spatial", "temporal", "spatiotemporal")}
        base = loocv(ds["temporal"], BaselineTrainer(3), seed=seed).mse
        print(f"{seed:>4}  {mse['spatial']:.4f}   {mse['temporal']:.4f}    "
              f"{mse['spatiotemporal']:.4f}          {base:.4f}")


if __name__ == "__main__":
    main(*sys.argv[1:])
