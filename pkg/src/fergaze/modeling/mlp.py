"""Small fully connected regressors trained by full-batch gradient steps on a weighted MSE.

The trainer works on a stack of independent networks at once (leading "fold"
axis) so that leave-one-out folds can share every numpy call.  A single model
is just a stack of one.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

FORMAT = "fergaze-mlp/v1"
OPTIMIZERS = ("adam", "gd")


@dataclass(frozen=True)
class MlpConfig:
    """Hidden and output layer widths, e.g. ``(32, 16, 4)``; the input width comes from the data.

    Hidden layers use the rectifier, the output layer is linear.
    """

    layers: tuple[int, ...] = (32, 16, 4)
    learning_rate: float = 0.001
    epochs: int = 500
    seed: int = 0
    optimizer: str = "adam"
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(int(n) for n in self.layers))
        if len(self.layers) < 2:
            raise ValueError("need at least one hidden layer and an output layer")
        if any(n < 1 for n in self.layers):
            raise ValueError(f"layer widths must be positive: {self.layers}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @property
    def n_outputs(self) -> int:
        return self.layers[-1]


TASK1_PRESET = MlpConfig((32, 16, 4), 0.001, 500)
TASK2_PRESET = MlpConfig((100, 16, 4), 0.001, 1000)


@dataclass
class MlpModel:
    sizes: tuple[int, ...]  # input width first
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x_mean: np.ndarray
    x_scale: np.ndarray
    loss_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    config: MlpConfig | None = None

    def raw_output(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {X.shape[1]} != model input width {self.sizes[0]}")
        h = (X - self.x_mean) / self.x_scale
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
        return h

    def predict(self, X) -> np.ndarray:
        return predict_mlp(self, X)

    def to_json(self) -> str:
        return json.dumps({
            "format": FORMAT,
            "sizes": list(self.sizes),
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "loss_trace": self.loss_trace.tolist(),
            "config": asdict(self.config) if self.config else None,
        })

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        d = json.loads(text)
        if d.get("format") != FORMAT:
            raise ValueError(f"not an MLP model file (format {d.get('format')!r})")
        sizes = tuple(d["sizes"])
        Ws = [np.asarray(w, dtype=float).reshape(sizes[i], sizes[i + 1])
              for i, w in enumerate(d["weights"])]
        bs = [np.asarray(b, dtype=float) for b in d["biases"]]
        cfg = MlpConfig(**d["config"]) if d.get("config") else None
        return cls(sizes, Ws, bs, np.asarray(d["x_mean"]), np.asarray(d["x_scale"]),
                   np.asarray(d["loss_trace"]), cfg)


def predict_mlp(model: MlpModel, X) -> np.ndarray:
    """Forward pass with outputs clamped to [0, 1]."""
    return np.clip(model.raw_output(X), 0.0, 1.0)


def target_weights(target_index: Sequence[int], n_outputs: int = 4, w_target: float = 2.0) -> np.ndarray:
    """Per-row output weights: ``w_target`` on the target face, 1 elsewhere."""
    t = np.asarray(target_index, dtype=int)
    W = np.ones((len(t), n_outputs))
    W[np.arange(len(t)), t] = w_target
    return W


# ---------------------------------------------------------------------------
# stacked core

def init_params(sizes: Sequence[int], seeds: Sequence[int], dtype=np.float64):
    """Uniform fan-in init, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``; zero biases.

    Returns per-layer ``W`` of shape ``(F, n_in, n_out)`` and ``b`` of shape ``(F, 1, n_out)``.
    """
    F = len(seeds)
    Ws = [np.empty((F, a, b), dtype=dtype) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [np.zeros((F, 1, b), dtype=dtype) for b in sizes[1:]]
    for f, s in enumerate(seeds):
        rng = np.random.default_rng(s)
        for W in Ws:
            lim = 1.0 / np.sqrt(W.shape[1])
            W[f] = rng.uniform(-lim, lim, size=W.shape[1:])
    return Ws, bs


def _forward(Ws, bs, X):
    acts = [X]
    h = X
    for i, (W, b) in enumerate(zip(Ws, bs)):
        h = h @ W + b
        if i < len(Ws) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def _loss_grad(Ws, bs, X, Y, C, M, gW=None, gb=None):
    """Loss per stack member and gradients.

    ``X`` (F, n, d); ``Y`` and ``C`` (n, k) with ``C`` the row-normalized weights;
    ``M`` (F, n) row mask divided by the per-member row count.  Gradients are
    written into ``gW`` / ``gb`` when those are given.
    """
    acts = _forward(Ws, bs, X)
    diff = acts[-1] - Y
    wsq = C * diff
    g = 2.0 * wsq * M[:, :, None]
    loss = 0.5 * (g * diff).sum(axis=(1, 2))
    gW = [None] * len(Ws) if gW is None else gW
    gb = [None] * len(Ws) if gb is None else gb
    for i in range(len(Ws) - 1, -1, -1):
        gW[i] = np.matmul(acts[i].transpose(0, 2, 1), g, out=gW[i])
        gb[i] = g.sum(axis=1, keepdims=True, out=gb[i])
        if i:
            g = (g @ Ws[i].transpose(0, 2, 1)) * (acts[i] > 0)
    return loss, gW, gb


def _flat_views(buf, shapes):
    out, off = [], 0
    for shp in shapes:
        k = int(np.prod(shp))
        out.append(buf[off:off + k].reshape(shp))
        off += k
    return out


def _check_data(X, Y, weights, k):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ValueError(f"inputs {X.shape} and targets {Y.shape} do not line up")
    if Y.shape[1] != k:
        raise ValueError(f"targets have {Y.shape[1]} outputs, network has {k}")
    W = np.ones_like(Y) if weights is None else np.broadcast_to(np.asarray(weights, float), Y.shape)
    for name, a in (("inputs", X), ("targets", Y), ("weights", W)):
        if not np.isfinite(a).all():
            raise ValueError(f"non-finite values in {name}")
    if (W < 0).any() or (W.sum(axis=1) <= 0).any():
        raise ValueError("output weights must be non-negative with a positive row sum")
    return X, Y, W


def _standardize_stats(X, mask):
    n = mask.sum(axis=1, keepdims=True)
    mu = (mask @ X) / n
    var = (mask @ (X * X)) / n - mu * mu
    sd = np.sqrt(np.maximum(var, 0.0))
    sd[sd < 1e-12] = 1.0
    return mu, sd


def train_stack(config: MlpConfig, X, Y, weights=None, masks=None, seeds=None) -> list[MlpModel]:
    """Train one network per row of ``masks`` (training-row indicator) on shared data."""
    X, Y, W = _check_data(X, Y, weights, config.n_outputs)
    n = len(X)
    masks = np.ones((1, n)) if masks is None else np.asarray(masks, dtype=float)
    seeds = [config.seed] * len(masks) if seeds is None else list(seeds)
    if len(seeds) != len(masks):
        raise ValueError("one seed per mask row required")
    if (masks.sum(axis=1) < 1).any():
        raise ValueError("every stack member needs at least one training row")
    dt = np.dtype(config.dtype)
    sizes = (X.shape[1],) + config.layers
    mu, sd = _standardize_stats(X, masks)
    Xs = ((X[None, :, :] - mu[:, None, :]) / sd[:, None, :]).astype(dt)
    C = (W / W.sum(axis=1, keepdims=True)).astype(dt)
    Mn = (masks / masks.sum(axis=1, keepdims=True)).astype(dt)
    Yd = Y.astype(dt)
    Ws0, bs0 = init_params(sizes, seeds, dt)
    shapes = [a.shape for a in Ws0 + bs0]
    # one flat buffer for parameters and one for gradients: the optimizer step is a few big ops
    P = np.concatenate([a.ravel() for a in Ws0 + bs0])
    G = np.zeros_like(P)
    pv, gv = _flat_views(P, shapes), _flat_views(G, shapes)
    L = len(Ws0)
    Ws, bs, gW, gb = pv[:L], pv[L:], gv[:L], gv[L:]
    trace = np.zeros((len(masks), config.epochs))
    lr = config.learning_rate
    if config.optimizer == "adam":
        b1, b2, eps = 0.9, 0.999, 1e-8
        m1, m2 = np.zeros_like(P), np.zeros_like(P)
        tmp = np.empty_like(P)
    for ep in range(config.epochs):
        loss, _, _ = _loss_grad(Ws, bs, Xs, Yd, C, Mn, gW, gb)
        trace[:, ep] = loss
        if config.optimizer == "adam":
            c1 = lr * np.sqrt(1.0 - b2 ** (ep + 1)) / (1.0 - b1 ** (ep + 1))
            m1 *= b1
            m1 += np.multiply(G, 1.0 - b1, out=tmp)
            m2 *= b2
            np.multiply(G, G, out=tmp)
            tmp *= 1.0 - b2
            m2 += tmp
            np.sqrt(m2, out=tmp)
            tmp += eps
            np.divide(m1, tmp, out=tmp)
            tmp *= c1
            P -= tmp
        else:
            P -= lr * G
    return [MlpModel(sizes, [Wl[f].astype(float) for Wl in Ws], [bl[f, 0].astype(float) for bl in bs],
                     mu[f].copy(), sd[f].copy(), trace[f], replace(config, seed=int(seeds[f])))
            for f in range(len(masks))]


def train_mlp(config: MlpConfig, inputs, targets, output_weights=None) -> MlpModel:
    """Fit one network; ``output_weights`` is ``(k,)`` or per-row ``(n, k)``."""
    return train_stack(config, inputs, targets, output_weights)[0]


def loss_and_grad(model: MlpModel, X, Y, weights=None):
    """Weighted MSE on standardized inputs and its gradient, for one model (float64).

    Returns ``(loss, grads_W, grads_b)``.
    """
    X, Y, W = _check_data(X, Y, weights, model.sizes[-1])
    Xs = ((X - model.x_mean) / model.x_scale)[None]
    C = W / W.sum(axis=1, keepdims=True)
    M = np.full((1, len(X)), 1.0 / len(X))
    loss, gW, gb = _loss_grad([w[None] for w in model.weights], [b[None, None] for b in model.biases],
                              Xs, Y, C, M)
    return float(loss[0]), [g[0] for g in gW], [g[0, 0] for g in gb]


def weighted_mse(model: MlpModel, X, Y, weights=None) -> float:
    """The training objective evaluated on the unclamped outputs."""
    X, Y, W = _check_data(X, Y, weights, model.sizes[-1])
    C = W / W.sum(axis=1, keepdims=True)
    d = model.raw_output(X) - Y
    return float((C * d * d).sum(axis=1).mean())
