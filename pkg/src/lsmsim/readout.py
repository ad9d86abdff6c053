"""Linear readout: forward pass, cross-entropy, SGD training, evaluation, early exit."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lsm import LsmConfig, lsm_forward

LINEAR_MAGIC = 0x4C494E52
_LINEAR_HEADER = struct.Struct("<III")


@dataclass
class LinearLayer:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64)
        self.b = np.array(self.b, dtype=np.float64).reshape(-1)
        if self.W.ndim != 2 or self.W.shape[0] != self.b.size:
            raise ValueError(f"W {self.W.shape} and b {self.b.shape} disagree")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("layer parameters must be finite")

    @classmethod
    def init(cls, n_out: int, n_in: int, seed: int = 0, std: float | None = None) -> "LinearLayer":
        """Gaussian init with std ``1/sqrt(n_in)`` unless given; zero bias."""
        rng = np.random.default_rng(seed)
        std = 1.0 / np.sqrt(n_in) if std is None else std
        return cls(rng.normal(0.0, std, size=(n_out, n_in)), np.zeros(n_out))

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape

    def copy(self) -> "LinearLayer":
        return LinearLayer(self.W.copy(), self.b.copy())


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    momentum: float = 0.0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


def linear_forward(x, layer: LinearLayer) -> np.ndarray:
    """``W @ x + b`` for a vector, or row-wise for a ``(n, in)`` matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.W.shape[1]:
        raise ValueError(f"input dim {x.shape[-1]} != layer input dim {layer.W.shape[1]}")
    return x @ layer.W.T + layer.b


def softmax(z, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_xent(logits, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of one logit vector against an integer label.

    Returns ``(loss, d loss / d logits)``.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < z.size:
        raise ValueError(f"label {label} outside [0, {z.size})")
    shifted = z - z.max()
    log_norm = np.log(np.exp(shifted).sum())
    loss = float(log_norm - shifted[label])
    grad = np.exp(shifted - log_norm)
    grad[label] -= 1.0
    return loss, grad


def batch_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over rows and its gradient wrt the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    n = logits.shape[0]
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = np.exp(shifted - log_norm[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


class _Sgd:
    """Plain or heavy-ball SGD over a list of arrays, updated in place."""

    def __init__(self, params, lr: float, momentum: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads) -> None:
        for p, g, v in zip(self.params, grads, self.velocity):
            if self.momentum:
                v *= self.momentum
                v += g
                g = v
            p -= self.lr * g


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_supervised(
    X,
    y,
    cfg: TrainConfig,
    num_classes: int | None = None,
    init: LinearLayer | None = None,
) -> tuple[LinearLayer, list[float]]:
    """Mini-batch SGD on mean cross-entropy.

    ``X`` is ``(n, d)`` (normalized spike counts), ``y`` integer labels.
    Returns the trained layer and the mean training loss of every epoch.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty dataset")
    if y.shape != (X.shape[0],):
        raise ValueError("one label per sample required")
    num_classes = int(y.max()) + 1 if num_classes is None else num_classes
    rng = np.random.default_rng(cfg.seed)
    layer = init.copy() if init is not None else LinearLayer(
        np.zeros((num_classes, X.shape[1])), np.zeros(num_classes)
    )
    if layer.shape != (num_classes, X.shape[1]):
        raise ValueError(f"initial layer {layer.shape} does not fit data")
    opt = _Sgd([layer.W, layer.b], cfg.lr, cfg.momentum)

    curve = []
    for _ in range(cfg.epochs):
        total = 0.0
        for idx in minibatches(X.shape[0], cfg.batch_size, rng):
            xb = X[idx]
            loss, g = batch_xent(linear_forward(xb, layer), y[idx])
            total += loss * len(idx)
            opt.step([g.T @ xb, g.sum(axis=0)])
        curve.append(total / X.shape[0])
    return layer, curve


def predict(layer: LinearLayer, X) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(linear_forward(X, layer), axis=-1)


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray
    per_class_accuracy: np.ndarray

    def to_dict(self) -> dict:
        return {
            "accuracy": float(self.accuracy),
            "confusion": self.confusion.tolist(),
            "per_class_accuracy": [float(a) for a in self.per_class_accuracy],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def report_from_predictions(pred, y, num_classes: int) -> EvalReport:
    pred = np.asarray(pred, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValueError("empty dataset")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / np.maximum(support, 1), np.nan)
    return EvalReport(float(np.trace(confusion) / y.size), confusion, per_class)


def evaluate(layer: LinearLayer, X, y, num_classes: int | None = None) -> EvalReport:
    num_classes = layer.shape[0] if num_classes is None else num_classes
    return report_from_predictions(predict(layer, X), y, num_classes)


def early_exit_from_raster(raster: np.ndarray, layer: LinearLayer, conf_th: float) -> tuple[int, int]:
    """Early-exit decision on an already simulated ``(T, h)`` raster.

    Running counts after step ``t`` are normalized by the full window ``T``,
    so the last step reproduces the standard full-window prediction.
    """
    if conf_th < 0:
        raise ValueError("conf_th must be >= 0")
    T = raster.shape[0]
    running = np.cumsum(raster, axis=0, dtype=np.float64) / T
    logits = linear_forward(running, layer)
    if conf_th <= 1:
        conf = softmax(logits, axis=1).max(axis=1)
        hit = np.flatnonzero(conf >= conf_th)
        if hit.size:
            t = int(hit[0])
            return int(np.argmax(logits[t])), t + 1
    return int(np.argmax(logits[-1])), T


def early_exit_infer(x, cfg: LsmConfig, layer: LinearLayer, conf_th: float, trial_seed: int = 0) -> tuple[int, int]:
    """Classify with the fewest time steps whose softmax confidence reaches ``conf_th``.

    Returns ``(label, exit_step)`` with ``exit_step`` in ``1..T``.  A threshold
    above 1 never triggers and the full window is used.
    """
    raster, _ = lsm_forward(x, cfg, trial_seed)
    return early_exit_from_raster(raster, layer, conf_th)


def save_linear(layer: LinearLayer, path) -> None:
    n_out, n_in = layer.shape
    with open(path, "wb") as fh:
        fh.write(_LINEAR_HEADER.pack(LINEAR_MAGIC, n_out, n_in))
        fh.write(layer.W.astype("<f8").tobytes())
        fh.write(layer.b.astype("<f8").tobytes())


def load_linear(path) -> LinearLayer:
    raw = Path(path).read_bytes()
    if len(raw) < _LINEAR_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n_out, n_in = _LINEAR_HEADER.unpack_from(raw)
    if magic != LINEAR_MAGIC:
        raise ValueError(f"{path}: bad magic 0x{magic:08X}")
    body = np.frombuffer(raw[_LINEAR_HEADER.size:], dtype="<f8")
    if body.size != n_out * n_in + n_out:
        raise ValueError(f"{path}: wrong payload size")
    return LinearLayer(body[: n_out * n_in].reshape(n_out, n_in), body[n_out * n_in:])
