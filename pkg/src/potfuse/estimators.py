"""sklearn-compatible estimators so the trainers compose with the wider ecosystem.

Each class wraps an in-package trainer behind fit/predict/predict_proba and
inherits get_params/set_params from sklearn's BaseEstimator. Inputs go through
the package's own validation helpers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import baselines as baselines_mod
from . import head as head_mod
from .baselines import BaselineConfig, BaselineModel, predict_baseline
from .head import TrainingConfig
from .validation import as_float_matrix, as_label_vector


class FusedHeadClassifier(BaseEstimator, ClassifierMixin):
    """Dropout -> linear -> softmax head trained with CE + L1 loss and Adam."""

    def __init__(
        self,
        batch_size: int = 30,
        epochs: int = 5,
        dropout_rate: float = 0.5,
        learning_rate: float = 0.01,
        lr_decay_factor: float = 1.0,
        lr_decay_step: int = 400,
        weight_decay: float = 5e-4,
        momentum: float = 0.9,
        lambda1: float = 1.0,
        optimizer: str = "adam",
        seed: int = 0,
        positive_class: int = 0,
    ):
        self.batch_size = batch_size
        self.epochs = epochs
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.lr_decay_factor = lr_decay_factor
        self.lr_decay_step = lr_decay_step
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.lambda1 = lambda1
        self.optimizer = optimizer
        self.seed = seed
        self.positive_class = positive_class

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            dropout_rate=self.dropout_rate,
            learning_rate=self.learning_rate,
            lr_decay_factor=self.lr_decay_factor,
            lr_decay_step=self.lr_decay_step,
            weight_decay=self.weight_decay,
            momentum=self.momentum,
            lambda1=self.lambda1,
            optimizer=self.optimizer,
            seed=self.seed,
        )

    def fit(self, X, y, eval_set: tuple | None = None):
        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        if eval_set is None:
            eval_set = (X, y)
        self.params_, self.history_ = head_mod.train_arrays(
            X, y, eval_set[0], eval_set[1], self._config()
        )
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = as_float_matrix(X)
        _, probs = head_mod.forward(self.params_, X)
        return np.atleast_2d(probs)

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return np.where(probs[:, 0] >= probs[:, 1], 0, 1)

    def decision_function(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, self.positive_class]


class _BaselineEstimator(BaseEstimator, ClassifierMixin):
    kind = ""

    def __init__(
        self,
        learning_rate: float = 0.01,
        epochs: int = 5,
        batch_size: int = 30,
        weight_decay: float = 5e-4,
        hidden_units: int = 128,
        seed: int = 0,
    ):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.hidden_units = hidden_units
        self.seed = seed

    def _config(self) -> BaselineConfig:
        return BaselineConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            hidden_units=self.hidden_units,
            seed=self.seed,
        )

    def fit(self, X, y):
        from .features import FeatureMatrix  # noqa: PLC0415

        X = as_float_matrix(X)
        y = as_label_vector(y, X.shape[0])
        fm = FeatureMatrix(values=X.astype(np.float32), labels=y.astype(np.uint8))
        self.model_: BaselineModel = baselines_mod.train_baseline(self.kind, fm, self._config())
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        labels, _ = predict_baseline(self.model_, X)
        return labels

    def predict_proba(self, X) -> np.ndarray:
        _, p0 = predict_baseline(self.model_, X, positive_class=0)
        return np.stack([p0, 1.0 - p0], axis=1)


class LogisticRegressionBaseline(_BaselineEstimator):
    """The head trainer with lambda1 = 0 and no dropout (shared code path)."""

    kind = "logistic_regression"


class LinearSVMBaseline(_BaselineEstimator):
    """Hinge loss + L2, plain subgradient descent."""

    kind = "linear_svm"


class MLPBaseline(_BaselineEstimator):
    """One rectified hidden layer (default width 128) + softmax CE, Adam."""

    kind = "mlp"
