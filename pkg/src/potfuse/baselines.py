"""Comparison classifiers over the same fused features.

Three desk-scale baselines: logistic regression (the head trainer with the
L1 term switched off, shared code path), a linear SVM trained by hinge-loss
subgradient descent, and a one-hidden-layer MLP.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import head as head_mod
from .errors import DimensionError, FormatError
from .features import FeatureMatrix
from .head import (
    HeadParameters,
    OptimizerState,
    TrainingConfig,
    adam_update,
    softmax,
)
from .metrics import EvalReport, append_csv_row, build_report
from .validation import as_float_matrix, as_label_vector

KINDS = ("logistic_regression", "linear_svm", "mlp")


@dataclass
class BaselineConfig:
    learning_rate: float = 0.01
    epochs: int = 5
    batch_size: int = 30
    weight_decay: float = 5e-4
    hidden_units: int = 128  # mlp only
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BaselineConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class BaselineModel:
    kind: str
    arrays: dict[str, np.ndarray]
    config: BaselineConfig

    @property
    def in_dim(self) -> int:
        if self.kind == "linear_svm":
            return self.arrays["w"].shape[0]
        if self.kind == "mlp":
            return self.arrays["w1"].shape[1]
        return self.arrays["weights"].shape[1]


def _to_training_config(config: BaselineConfig) -> TrainingConfig:
    # Logistic regression = the head with no L1 term and no dropout.
    return TrainingConfig(
        batch_size=config.batch_size,
        epochs=config.epochs,
        dropout_rate=0.0,
        learning_rate=config.learning_rate,
        weight_decay=config.weight_decay,
        lambda1=0.0,
        optimizer="adam",
        seed=config.seed,
    )


def hinge_loss(w: np.ndarray, b: float, X: np.ndarray, y_pm: np.ndarray, weight_decay: float) -> float:
    margins = y_pm * (X @ w + b)
    return float(np.mean(np.maximum(0.0, 1.0 - margins))) + 0.5 * weight_decay * float(w @ w)


def hinge_subgradient(
    w: np.ndarray, b: float, X: np.ndarray, y_pm: np.ndarray, weight_decay: float
) -> tuple[np.ndarray, float]:
    """Subgradient of the mean hinge loss plus L2; flat (zero) at margin >= 1."""
    margins = y_pm * (X @ w + b)
    violating = margins < 1.0
    if np.any(violating):
        gw = -(y_pm[violating, None] * X[violating]).sum(axis=0) / len(y_pm)
        gb = -float(y_pm[violating].sum()) / len(y_pm)
    else:
        gw = np.zeros_like(w)
        gb = 0.0
    return gw + weight_decay * w, gb


def _fit_linear_svm(X: np.ndarray, y: np.ndarray, config: BaselineConfig) -> dict[str, np.ndarray]:
    y_pm = np.where(y == 1, 1.0, -1.0)  # class 1 (normal) maps to +1
    w = np.zeros(X.shape[1])
    b = 0.0
    rng = np.random.default_rng(config.seed)
    steps_per_epoch = math.ceil(len(y) / config.batch_size)
    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        for k in range(steps_per_epoch):
            idx = order[k * config.batch_size : (k + 1) * config.batch_size]
            gw, gb = hinge_subgradient(w, b, X[idx], y_pm[idx], config.weight_decay)
            w -= config.learning_rate * gw
            b -= config.learning_rate * gb
    return {"w": w, "b": np.array([b])}


def _init_mlp(in_dim: int, hidden: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    b1 = 1.0 / math.sqrt(in_dim)
    b2 = 1.0 / math.sqrt(hidden)
    return {
        "w1": rng.uniform(-b1, b1, size=(hidden, in_dim)),
        "b1": np.zeros(hidden),
        "w2": rng.uniform(-b2, b2, size=(2, hidden)),
        "b2": np.zeros(2),
    }


def _mlp_forward(arrays: dict[str, np.ndarray], X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pre = X @ arrays["w1"].T + arrays["b1"]
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ arrays["w2"].T + arrays["b2"]
    return pre, softmax(logits)


def _fit_mlp(X: np.ndarray, y: np.ndarray, config: BaselineConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(config.seed)
    arrays = _init_mlp(X.shape[1], config.hidden_units, rng)
    state = OptimizerState()
    target = np.eye(2)[y]
    steps_per_epoch = math.ceil(len(y) / config.batch_size)
    for _ in range(config.epochs):
        order = rng.permutation(len(y))
        for k in range(steps_per_epoch):
            idx = order[k * config.batch_size : (k + 1) * config.batch_size]
            Xb, tb = X[idx], target[idx]
            pre, probs = _mlp_forward(arrays, Xb)
            hidden = np.maximum(pre, 0.0)
            dz2 = (probs - tb) / len(idx)
            d_hidden = (dz2 @ arrays["w2"]) * (pre > 0.0)
            grads = {
                "w2": dz2.T @ hidden + config.weight_decay * arrays["w2"],
                "b2": dz2.sum(axis=0),
                "w1": d_hidden.T @ Xb + config.weight_decay * arrays["w1"],
                "b1": d_hidden.sum(axis=0),
            }
            adam_update(arrays, state, grads, config.learning_rate)
    return arrays


def train_baseline(kind: str, train_fm: FeatureMatrix, config: BaselineConfig) -> BaselineModel:
    if kind not in KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; choose one of {KINDS}")
    if train_fm.labels is None:
        raise ValueError("baseline training needs a labeled feature store")
    if train_fm.rows == 0:
        raise ValueError("empty training store")
    X = as_float_matrix(train_fm.values, "train features")
    y = as_label_vector(train_fm.labels, X.shape[0], "train labels")

    if kind == "logistic_regression":
        params, _ = head_mod.train_arrays(X, y, X, y, _to_training_config(config))
        arrays = {"weights": params.weights, "bias": params.bias}
    elif kind == "linear_svm":
        arrays = _fit_linear_svm(X, y, config)
    else:
        arrays = _fit_mlp(X, y, config)
    return BaselineModel(kind=kind, arrays=arrays, config=config)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def predict_baseline(
    model: BaselineModel, X, positive_class: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Labels (ties to class 0) and positive-class scores in [0, 1]."""
    X = as_float_matrix(X)
    if X.shape[1] != model.in_dim:
        raise DimensionError(f"features are {X.shape[1]}-d, model expects {model.in_dim}-d")
    if model.kind == "linear_svm":
        margin = X @ model.arrays["w"] + model.arrays["b"][0]
        p1 = _sigmoid(margin)
        probs = np.stack([1.0 - p1, p1], axis=1)
    elif model.kind == "mlp":
        _, probs = _mlp_forward(model.arrays, X)
    else:
        params = HeadParameters(model.arrays["weights"], model.arrays["bias"])
        _, probs = head_mod.forward(params, X)
        probs = np.atleast_2d(probs)
    labels = np.where(probs[:, 0] >= probs[:, 1], 0, 1)
    return labels, probs[:, positive_class]


def evaluate_baseline(
    model: BaselineModel,
    test_fm: FeatureMatrix,
    positive_class: int = 0,
    csv_path=None,
    model_name: str | None = None,
) -> EvalReport:
    if test_fm.labels is None:
        raise ValueError("evaluation needs a labeled feature store")
    preds, scores = predict_baseline(model, test_fm.values, positive_class)
    report = build_report(preds, test_fm.labels.astype(np.int64), scores, positive_class)
    if csv_path is not None:
        append_csv_row(csv_path, model_name or model.kind, report)
    return report


def save_baseline(model: BaselineModel, path) -> None:
    """PFH1 container with a kind tag; the MLP writes its two layers as two records."""
    meta_common = {"kind": model.kind, "train_config": model.config.to_dict()}
    blob = bytearray()
    if model.kind == "mlp":
        p1 = HeadParameters(model.arrays["w1"], model.arrays["b1"])
        p2 = HeadParameters(model.arrays["w2"], model.arrays["b2"])
        blob += head_mod._pack_record(p1, {**meta_common, "layer": 0})
        blob += head_mod._pack_record(p2, {**meta_common, "layer": 1})
    elif model.kind == "linear_svm":
        params = HeadParameters(model.arrays["w"][None, :], model.arrays["b"])
        blob += head_mod._pack_record(params, meta_common)
    else:
        params = HeadParameters(model.arrays["weights"], model.arrays["bias"])
        blob += head_mod._pack_record(params, meta_common)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(bytes(blob))


def load_baseline(path) -> BaselineModel:
    raw = Path(path).read_bytes()
    params, meta, pos = head_mod._unpack_record(raw, 0, path)
    kind = meta.get("kind")
    if kind not in KINDS:
        raise FormatError(f"{path} carries no known baseline kind tag (got {kind!r})")
    config = BaselineConfig.from_dict(meta.get("train_config", {}))
    if kind == "mlp":
        params2, _, pos = head_mod._unpack_record(raw, pos, path)
        arrays = {
            "w1": params.weights,
            "b1": params.bias,
            "w2": params2.weights,
            "b2": params2.bias,
        }
    elif kind == "linear_svm":
        arrays = {"w": params.weights[0], "b": params.bias}
    else:
        arrays = {"weights": params.weights, "bias": params.bias}
    if pos != len(raw):
        raise FormatError(f"trailing bytes in {path}")
    return BaselineModel(kind=kind, arrays=arrays, config=config)
