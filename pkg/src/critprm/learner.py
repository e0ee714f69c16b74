"""Fully-connected criticality regressor trained in log space.

The network maps a flattened occupancy patch to ``z = log(criticality + eps)``.
Everything is float64 numpy with hand-written backprop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from critprm.errors import DivergenceError, InvalidConfigError, ShapeMismatchError

LABEL_EPSILON = 1e-6
# gradients smaller than this are compared absolutely; finite differences of a
# loss near 1e2 carry ~1e-9 roundoff
GRAD_CHECK_FLOOR = 1e-3


@dataclass
class MlpModel:
    layer_sizes: list
    weights: list  # weights[l] has shape (layer_sizes[l], layer_sizes[l + 1])
    biases: list
    epsilon: float = LABEL_EPSILON

    def __post_init__(self):
        sizes = self.layer_sizes
        if sizes[-1] != 1:
            raise ShapeMismatchError("output layer must have width 1")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ShapeMismatchError(f"layer {l} parameter shapes do not chain")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.epsilon,
        )

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "epsilon": self.epsilon,
            "activation": "relu",
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpModel":
        sizes = [int(s) for s in data["layer_sizes"]]
        if data.get("activation", "relu") != "relu":
            raise ShapeMismatchError(f"unsupported activation {data['activation']!r}")
        weights = [
            np.array(w, dtype=float).reshape(sizes[l], sizes[l + 1]) for l, w in enumerate(data["weights"])
        ]
        biases = [np.array(b, dtype=float) for b in data["biases"]]
        return cls(sizes, weights, biases, float(data.get("epsilon", LABEL_EPSILON)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_model(layer_sizes: Sequence[int], rng: np.random.Generator, epsilon: float = LABEL_EPSILON) -> MlpModel:
    """He-normal weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    weights = [rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return MlpModel(sizes, weights, biases, epsilon)


def zero_model(layer_sizes: Sequence[int], epsilon: float = LABEL_EPSILON) -> MlpModel:
    sizes = [int(s) for s in layer_sizes]
    return MlpModel(
        sizes,
        [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
        [np.zeros(b) for b in sizes[1:]],
        epsilon,
    )


def _as_batch(model: MlpModel, patches) -> np.ndarray:
    x = np.asarray(patches, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.input_size:
        raise ShapeMismatchError(f"patch length {x.shape[1]} != model input {model.input_size}")
    return x


def forward_batch(model: MlpModel, patches) -> np.ndarray:
    h = _as_batch(model, patches)
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if l < last:
            h = np.maximum(h, 0.0)
    return h[:, 0]


def forward(model: MlpModel, patch) -> float:
    return float(forward_batch(model, patch)[0])


def log_labels(labels, epsilon: float = LABEL_EPSILON) -> np.ndarray:
    return np.log(np.asarray(labels, dtype=float) + epsilon)


def loss(model: MlpModel, patches, labels) -> float:
    """Mean squared error between the output and ``log(label + eps)``."""
    z = forward_batch(model, patches)
    r = z - log_labels(labels, model.epsilon)
    return float(np.mean(r * r))


def loss_and_grads(
    model: MlpModel,
    x: np.ndarray,
    target: np.ndarray,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, list[np.ndarray]]:
    """Loss against log-space ``target`` and gradients ordered like ``model.params()``.

    Inverted dropout is applied to hidden activations when ``dropout_rate > 0``.
    """
    acts = [x]
    masks = []
    h = x
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if l < last:
            h = np.maximum(h, 0.0)
            if dropout_rate > 0:
                keep = (rng.random(h.shape) >= dropout_rate) / (1.0 - dropout_rate)
                h = h * keep
                masks.append(keep)
            else:
                masks.append(None)
        acts.append(h)
    r = acts[-1][:, 0] - target
    value = float(np.mean(r * r))

    grads: list[np.ndarray] = []
    delta = (2.0 / len(r)) * r[:, None]
    for l in range(last, -1, -1):
        gw = acts[l].T @ delta
        gb = delta.sum(axis=0)
        grads = [gw, gb] + grads
        if l > 0:
            delta = delta @ model.weights[l].T
            if masks[l - 1] is not None:
                delta = delta * masks[l - 1]
            delta = delta * (acts[l] > 0)
    return value, grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    dropout_rate: float = 0.1
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.dropout_rate < 1:
            raise InvalidConfigError("dropout_rate must be in [0, 1)")
        if self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise InvalidConfigError("validation_fraction must be in [0, 1)")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    baseline_val_loss: float = math.nan
    train_indices: np.ndarray = None
    val_indices: np.ndarray = None


def split_indices(n: int, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    n_val = int(math.floor(fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(dataset, cfg: TrainConfig, arch: Sequence[int]) -> tuple[MlpModel, TrainReport]:
    """Mini-batch SGD with momentum on a :class:`~critprm.centrality.Dataset`.

    ``arch`` lists every layer width including the input and the final 1.
    """
    x_all = np.asarray(dataset.patches, dtype=float)
    if len(x_all) == 0:
        raise InvalidConfigError("empty dataset")
    if x_all.shape[1] != arch[0]:
        raise ShapeMismatchError(f"patch length {x_all.shape[1]} != input size {arch[0]}")
    rng = np.random.default_rng(cfg.seed)
    model = init_model(arch, rng)
    y_all = log_labels(dataset.labels, model.epsilon)

    tr, va = split_indices(len(x_all), cfg.validation_fraction, rng)
    if len(tr) == 0:
        tr, va = va, tr
    model.biases[-1][:] = y_all[tr].mean()
    report = TrainReport(train_indices=tr, val_indices=va)
    if len(va):
        report.baseline_val_loss = float(np.mean((y_all[va] - y_all[tr].mean()) ** 2))

    params = model.params()
    velocity = [np.zeros_like(p) for p in params]
    for epoch in range(cfg.epochs):
        order = tr[rng.permutation(len(tr))]
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            b = order[s : s + cfg.batch_size]
            value, grads = loss_and_grads(model, x_all[b], y_all[b], cfg.dropout_rate, rng)
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            total += value * len(b)
            for p, v, g in zip(params, velocity, grads):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
        train_loss = total / len(tr)
        if not math.isfinite(train_loss) or not all(np.isfinite(p).all() for p in params):
            raise DivergenceError(f"non-finite parameters at epoch {epoch}")
        report.train_loss.append(train_loss)
        if len(va):
            report.val_loss.append(float(np.mean((forward_batch(model, x_all[va]) - y_all[va]) ** 2)))
    return model, report


def gradient_check(
    model: MlpModel,
    patches,
    labels,
    num_params: int = 50,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Worst relative error between backprop and central differences.

    Checks ``num_params`` parameters picked at random (all of them when the
    model is smaller). Entries where both gradients vanish count as exact;
    magnitudes below ``GRAD_CHECK_FLOOR`` are divided by the floor instead.
    """
    x = _as_batch(model, patches)
    target = log_labels(labels, model.epsilon)
    _, grads = loss_and_grads(model, x, target)
    params = model.params()
    sizes = [p.size for p in params]
    offsets = np.cumsum([0] + sizes)
    rng = np.random.default_rng(seed)
    total = int(offsets[-1])
    picks = rng.choice(total, size=min(num_params, total), replace=False)

    worst = 0.0
    for flat in picks.tolist():
        k = int(np.searchsorted(offsets, flat, side="right") - 1)
        p = params[k].reshape(-1)
        g = grads[k].reshape(-1)
        j = flat - offsets[k]
        old = p[j]
        p[j] = old + step
        up, _ = loss_and_grads(model, x, target)
        p[j] = old - step
        down, _ = loss_and_grads(model, x, target)
        p[j] = old
        numeric = (up - down) / (2 * step)
        scale = max(abs(numeric), abs(g[j]))
        if scale == 0.0:
            continue
        worst = max(worst, abs(numeric - g[j]) / max(scale, GRAD_CHECK_FLOOR))
    return worst


def predict_criticality(model: MlpModel, patches) -> np.ndarray:
    """``exp(z) - eps`` clamped at zero; the inverse of the label transform."""
    z = forward_batch(model, patches)
    return np.maximum(np.exp(z) - model.epsilon, 0.0)
