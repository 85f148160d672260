"""The trainable fused classifier: dropout -> linear 5344x2 -> softmax.

Loss is cross-entropy plus an L1 term between the softmax probabilities and
the one-hot target (coefficient lambda1), plus coupled L2 weight decay on the
weight matrix. Optimized with hand-rolled Adam (default) or SGD+momentum.
Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError
from .features import FeatureMatrix
from .validation import as_float_matrix, as_label_vector

OUT_DIM = 2
LOG_EPS = 1e-12  # clamp for -log(p) at perfect mispredictions
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

PFH1_MAGIC = b"PFH1"


@dataclass
class TrainingConfig:
    """Hyperparameters of the head trainer (defaults follow the published recipe)."""

    batch_size: int = 30
    epochs: int = 5
    dropout_rate: float = 0.5
    learning_rate: float = 0.01
    lr_decay_factor: float = 1.0
    lr_decay_step: int = 400
    weight_decay: float = 5e-4
    momentum: float = 0.9  # used only by the sgd_momentum optimizer
    lambda1: float = 1.0
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.lambda1 < 0.0:
            raise ValueError("lambda1 must be >= 0")
        if self.lr_decay_step < 1:
            raise ValueError("lr_decay_step must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class HeadParameters:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError("weights must be (out, in) with matching bias")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "HeadParameters":
        return HeadParameters(self.weights.copy(), self.bias.copy())


@dataclass
class OptimizerState:
    step: int = 0
    first_moment: dict = field(default_factory=dict)  # adam
    second_moment: dict = field(default_factory=dict)
    velocity: dict = field(default_factory=dict)  # sgd_momentum


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)


def init_params(in_dim: int, rng: np.random.Generator, out_dim: int = OUT_DIM) -> HeadParameters:
    """Fan-in uniform init for weights, zero bias."""
    bound = 1.0 / math.sqrt(in_dim)
    weights = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    return HeadParameters(weights=weights, bias=np.zeros(out_dim))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def make_dropout_mask(rng: np.random.Generator, shape, dropout_rate: float) -> np.ndarray:
    """Bernoulli(1-p) keep mask with inverted scaling 1/(1-p)."""
    keep = 1.0 - dropout_rate
    return (rng.random(shape) < keep).astype(np.float64) / keep


def forward(params: HeadParameters, x: np.ndarray, dropout_mask: np.ndarray | None = None):
    """Return (logits, probs) for a single vector or a batch.

    The mask, when given, is applied to the input (training mode); inference
    passes no mask and no scaling.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_dim:
        raise DimensionError(f"input has dim {x.shape[-1]}, head expects {params.in_dim}")
    if dropout_mask is not None:
        x = x * dropout_mask
    logits = x @ params.weights.T + params.bias
    return logits, softmax(logits)


def onehot(labels: np.ndarray, out_dim: int = OUT_DIM) -> np.ndarray:
    eye = np.eye(out_dim, dtype=np.float64)
    return eye[np.asarray(labels, dtype=np.int64)]


def loss_value(
    probs: np.ndarray,
    labels,
    lambda1: float = 1.0,
    params: HeadParameters | None = None,
    weight_decay: float = 0.0,
) -> float:
    """Mean over samples of CE + lambda1 * sum|p - onehot|, plus the L2 term once."""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    picked = np.clip(p[np.arange(len(y)), y], LOG_EPS, None)
    ce = -np.log(picked)
    l1 = np.abs(p - onehot(y, p.shape[1])).sum(axis=1)
    data = float(np.mean(ce + lambda1 * l1))
    reg = 0.0
    if weight_decay != 0.0 and params is not None:
        reg = 0.5 * weight_decay * float(np.sum(params.weights**2))
    return data + reg


def gradients(
    params: HeadParameters,
    X: np.ndarray,
    labels,
    lambda1: float = 1.0,
    weight_decay: float = 0.0,
    dropout_mask: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Analytic gradient of the batch loss w.r.t. weights and bias.

    The L1 term's subgradient uses sign(0) = 0. Dropout enters through the
    masked input, exactly as in the forward pass.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    Xm = X if dropout_mask is None else X * dropout_mask
    _, p = forward(params, Xm)
    target = onehot(y, params.out_dim)
    # d/dlogits of CE is (p - y); of sum_k s_k p_k it is p*s - p*(s.p), s = sign(p - y).
    s = np.sign(p - target)
    dz = (p - target) + lambda1 * (p * s - p * np.sum(s * p, axis=1, keepdims=True))
    dz /= X.shape[0]
    grad_w = dz.T @ Xm + weight_decay * params.weights
    grad_b = dz.sum(axis=0)
    return {"weights": grad_w, "bias": grad_b}


def adam_update(
    arrays: dict[str, np.ndarray],
    state: OptimizerState,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> None:
    """One Adam step with bias correction over named parameter arrays (in place)."""
    state.step += 1
    t = state.step
    for key, g in grads.items():
        m = state.first_moment.setdefault(key, np.zeros_like(arrays[key]))
        v = state.second_moment.setdefault(key, np.zeros_like(arrays[key]))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        arrays[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def adam_step(
    params: HeadParameters,
    state: OptimizerState,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> tuple[HeadParameters, OptimizerState]:
    """Standard Adam over the head's weights and bias; updates in place."""
    adam_update(
        {"weights": params.weights, "bias": params.bias}, state, grads, lr, beta1, beta2, eps
    )
    return params, state


def sgd_momentum_step(
    params: HeadParameters,
    state: OptimizerState,
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float,
) -> tuple[HeadParameters, OptimizerState]:
    state.step += 1
    arrays = {"weights": params.weights, "bias": params.bias}
    for key, g in grads.items():
        vel = state.velocity.setdefault(key, np.zeros_like(arrays[key]))
        vel *= momentum
        vel += g
        arrays[key] -= lr * vel
    return params, state


def effective_lr(config: TrainingConfig, step_index: int) -> float:
    """lr for the 1-indexed optimizer step: decays by the factor every lr_decay_step steps."""
    decays = (step_index - 1) // config.lr_decay_step
    return config.learning_rate * config.lr_decay_factor**decays


def _epoch_stats(params, X, y, config) -> tuple[float, float]:
    _, probs = forward(params, X)
    loss = loss_value(probs, y, config.lambda1, params, config.weight_decay)
    pred = predict_batch(params, X)[0]
    acc = float(np.mean(pred == y))
    return loss, acc


def train(
    train_fm: FeatureMatrix,
    test_fm: FeatureMatrix,
    config: TrainingConfig,
) -> tuple[HeadParameters, TrainingHistory]:
    """Mini-batch training over seeded shuffles; returns params and per-epoch history."""
    if train_fm.labels is None or test_fm.labels is None:
        raise ValueError("both feature stores must carry labels")
    if train_fm.rows == 0:
        raise ValueError("empty training store")
    if train_fm.cols != test_fm.cols:
        raise DimensionError(
            f"train store is {train_fm.cols}-d but test store is {test_fm.cols}-d"
        )
    return train_arrays(train_fm.values, train_fm.labels, test_fm.values, test_fm.labels, config)


def train_arrays(
    X, y, X_test, y_test, config: TrainingConfig
) -> tuple[HeadParameters, TrainingHistory]:
    X = as_float_matrix(X, "train features")
    y = as_label_vector(y, X.shape[0], "train labels")
    Xt = as_float_matrix(X_test, "test features")
    yt = as_label_vector(y_test, Xt.shape[0], "test labels")
    if X.shape[0] == 0:
        raise ValueError("empty training set")

    rng = np.random.default_rng(config.seed)
    params = init_params(X.shape[1], rng)
    state = OptimizerState()
    history = TrainingHistory()

    n = X.shape[0]
    steps_per_epoch = math.ceil(n / config.batch_size)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for b in range(steps_per_epoch):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            Xb, yb = X[idx], y[idx]
            mask = None
            if config.dropout_rate > 0.0:
                mask = make_dropout_mask(rng, Xb.shape, config.dropout_rate)
            grads = gradients(params, Xb, yb, config.lambda1, config.weight_decay, mask)
            lr = effective_lr(config, state.step + 1)
            if config.optimizer == "adam":
                adam_step(params, state, grads, lr)
            else:
                sgd_momentum_step(params, state, grads, lr, config.momentum)
        train_loss, train_acc = _epoch_stats(params, X, y, config)
        test_loss, test_acc = _epoch_stats(params, Xt, yt, config)
        history.train_loss.append(train_loss)
        history.train_accuracy.append(train_acc)
        history.test_loss.append(test_loss)
        history.test_accuracy.append(test_acc)
    return params, history


def predict(params: HeadParameters, x: np.ndarray, positive_class: int = 0) -> tuple[int, float]:
    """Label (argmax, ties to class 0) and the positive-class probability."""
    _, probs = forward(params, x)
    probs = np.atleast_2d(probs)[0]
    label = 0 if probs[0] >= probs[1] else 1
    return label, float(probs[positive_class])


def predict_batch(
    params: HeadParameters, X: np.ndarray, positive_class: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    _, probs = forward(params, X)
    probs = np.atleast_2d(probs)
    labels = np.where(probs[:, 0] >= probs[:, 1], 0, 1)
    return labels, probs[:, positive_class]


def save_head(
    params: HeadParameters,
    config: TrainingConfig,
    path,
    class_names: tuple[str, str] = ("pothole", "normal"),
    slice_map: list | None = None,
    extra_metadata: dict | None = None,
) -> None:
    """PFH1, little-endian: magic, dims, float32 weights (out-major), biases, JSON trailer."""
    meta = {
        "config": config.to_dict(),
        "seed": config.seed,
        "class_names": list(class_names),
        "slice_map": [list(entry) for entry in slice_map] if slice_map else None,
    }
    if extra_metadata:
        meta.update(extra_metadata)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(_pack_record(params, meta))


def _pack_record(params: HeadParameters, meta: dict) -> bytes:
    blob = bytearray()
    blob += PFH1_MAGIC
    blob += struct.pack("<II", params.in_dim, params.out_dim)
    blob += np.ascontiguousarray(params.weights, dtype="<f4").tobytes()
    blob += np.ascontiguousarray(params.bias, dtype="<f4").tobytes()
    payload = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(payload))
    blob += payload
    return bytes(blob)


def _unpack_record(raw: bytes, offset: int, path) -> tuple[HeadParameters, dict, int]:
    if raw[offset : offset + 4] != PFH1_MAGIC:
        raise FormatError(
            f"bad magic {raw[offset:offset + 4]!r} in {path}, expected {PFH1_MAGIC!r}"
        )
    if offset + 12 > len(raw):
        raise FormatError(f"truncated header in {path}")
    in_dim, out_dim = struct.unpack_from("<II", raw, offset + 4)
    pos = offset + 12
    w_count = in_dim * out_dim
    if pos + (w_count + out_dim) * 4 + 4 > len(raw):
        raise FormatError(f"truncated parameter block in {path}")
    weights = np.frombuffer(raw, dtype="<f4", count=w_count, offset=pos).reshape(out_dim, in_dim)
    pos += w_count * 4
    bias = np.frombuffer(raw, dtype="<f4", count=out_dim, offset=pos)
    pos += out_dim * 4
    (json_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if pos + json_len > len(raw):
        raise FormatError(f"truncated metadata in {path}")
    meta = json.loads(raw[pos : pos + json_len].decode("utf-8"))
    pos += json_len
    return HeadParameters(weights.astype(np.float64), bias.astype(np.float64)), meta, pos


def load_head(path) -> tuple[HeadParameters, TrainingConfig, dict]:
    raw = Path(path).read_bytes()
    params, meta, pos = _unpack_record(raw, 0, path)
    if pos != len(raw):
        raise FormatError(f"trailing bytes in {path}")
    config = TrainingConfig.from_dict(meta.get("config", {}))
    return params, config, meta
