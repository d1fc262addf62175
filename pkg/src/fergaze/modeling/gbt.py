"""Squared-error gradient boosting over exact-greedy regression trees."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

FORMAT = "fergaze-gbt/v1"


@dataclass(frozen=True)
class GbtParams:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 2
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 0:
            raise ValueError("n_trees and max_depth must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf.  Rows go left when ``x <= threshold``."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def _add(self, feat=-1, thr=0.0, val=0.0) -> int:
        self.feature.append(feat)
        self.threshold.append(thr)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(val)
        return len(self.feature) - 1

    @property
    def n_leaves(self) -> int:
        return sum(f < 0 for f in self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=int)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        lft, rgt = np.asarray(self.left), np.asarray(self.right)
        active = feat[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, feat[nd]] <= thr[nd]
            node[idx] = np.where(go_left, lft[nd], rgt[nd])
            active = feat[node] >= 0
        return np.asarray(self.value)[node]


def _best_split(X, r, rows, min_leaf):
    """Exact greedy search.  Ties go to the lowest feature index, then the lowest threshold."""
    n = len(rows)
    best = (0.0, -1, 0.0)
    if n < 2 * min_leaf:
        return best
    rr = r[rows]
    total = rr.sum()
    base = total * total / n
    for j in range(X.shape[1]):
        xv = X[rows, j]
        order = np.argsort(xv, kind="mergesort")
        xs, cs = xv[order], np.cumsum(rr[order])
        k = np.arange(min_leaf, n - min_leaf + 1)  # left size
        k = k[xs[k - 1] < xs[k]]
        if not len(k):
            continue
        sl = cs[k - 1]
        gain = sl * sl / k + (total - sl) ** 2 / (n - k) - base
        i = int(np.argmax(gain))
        # a gain that is not clearly positive is treated as no split
        if gain[i] > best[0] + 1e-12 * max(1.0, abs(base)):
            best = (float(gain[i]), j, float((xs[k[i] - 1] + xs[k[i]]) / 2.0))
    return best


def fit_tree(X: np.ndarray, r: np.ndarray, rows: np.ndarray, max_depth: int, min_leaf: int) -> RegressionTree:
    tree = RegressionTree()
    stack = [(tree._add(val=float(r[rows].mean())), rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth:
            continue
        gain, feat, thr = _best_split(X, r, idx, min_leaf)
        if feat < 0:
            continue
        mask = X[idx, feat] <= thr
        li, ri = idx[mask], idx[~mask]
        tree.feature[node], tree.threshold[node] = feat, thr
        tree.left[node] = tree._add(val=float(r[li].mean()))
        tree.right[node] = tree._add(val=float(r[ri].mean()))
        stack.append((tree.right[node], ri, depth + 1))
        stack.append((tree.left[node], li, depth + 1))
    return tree


@dataclass
class GbtModel:
    base: float
    learning_rate: float
    trees: list[RegressionTree]
    n_features: int
    train_mse: list[float] = field(default_factory=list)
    params: GbtParams | None = None

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        out = np.full(len(X), self.base)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "format": FORMAT, "base": self.base, "learning_rate": self.learning_rate,
            "n_features": self.n_features, "train_mse": self.train_mse,
            "params": asdict(self.params) if self.params else None,
            "trees": [asdict(t) for t in self.trees],
        })

    @classmethod
    def from_json(cls, text: str) -> "GbtModel":
        d = json.loads(text)
        if d.get("format") != FORMAT:
            raise ValueError(f"not a boosted-tree model file (format {d.get('format')!r})")
        return cls(d["base"], d["learning_rate"], [RegressionTree(**t) for t in d["trees"]],
                   d["n_features"], d["train_mse"], GbtParams(**d["params"]) if d["params"] else None)


def train_gbt(features, scores, params: GbtParams = GbtParams()) -> GbtModel:
    """Stagewise boosting from the mean; stops early once the residuals vanish.

    Rows are put into a canonical order first, so the fitted model does not
    depend on the order the training rows arrive in.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(scores, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"features {X.shape} and scores {y.shape} do not line up")
    if len(y) < 2:
        raise ValueError("need at least 2 rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in training data")
    order = np.lexsort(np.column_stack([X, y]).T[::-1])
    X, y = X[order], y[order]
    rng = np.random.default_rng(params.seed)
    base = float(y[0]) if np.ptp(y) == 0 else float(y.mean())
    pred = np.full(len(y), base)
    model = GbtModel(base, params.learning_rate, [], X.shape[1], [float(np.mean((y - pred) ** 2))], params)
    scale = 1e-12 * max(1.0, float(np.abs(y).max()))
    all_rows = np.arange(len(y))
    for _ in range(params.n_trees):
        r = y - pred
        if np.abs(r).max() <= scale:
            break
        rows = all_rows
        if params.subsample < 1.0:
            m = max(2 * params.min_leaf, int(round(params.subsample * len(y))))
            rows = np.sort(rng.choice(all_rows, size=min(m, len(y)), replace=False))
        tree = fit_tree(X, r, rows, params.max_depth, params.min_leaf)
        model.trees.append(tree)
        pred += params.learning_rate * tree.predict(X)
        model.train_mse.append(float(np.mean((y - pred) ** 2)))
    return model
