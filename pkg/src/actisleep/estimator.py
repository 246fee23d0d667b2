"""Scikit-learn compatible front end for the five architectures."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_is_fitted, validate_data

from .models import ModelSpec, Network
from .training import ArraySplit, TrainConfig, predict_scores, train
from .validation import check_binary_labels


class SleepQualityClassifier(ClassifierMixin, BaseEstimator):
    """Binary Good (1) / Poor (0) classifier over fixed-length activity rows.

    Architecture-specific parameters left as ``None`` take the defaults of
    :class:`~actisleep.models.ModelSpec`. Inputs are divided by a single
    positive scalar before reaching the network: ``input_scale="auto"`` uses
    the root mean square of the training matrix, a number uses that value
    and ``None`` disables scaling.

    When ``fit`` gets no explicit validation set, a stratified
    ``validation_fraction`` of the training rows is held out for early
    stopping.
    """

    def __init__(self, arch="lr", input_repr=None, hidden=None, filters=None,
                 filter_length=None, pool_length=None, conv_bias=None, pool_mode=None,
                 slots=None, hard_tanh=None, dropout=0.0, minibatch=5, max_epochs=50,
                 patience=5, init="auto", learning_rate=0.001, rho=0.9, epsilon=1e-8,
                 input_scale="auto", validation_fraction=0.15, random_state=0):
        self.arch = arch
        self.input_repr = input_repr
        self.hidden = hidden
        self.filters = filters
        self.filter_length = filter_length
        self.pool_length = pool_length
        self.conv_bias = conv_bias
        self.pool_mode = pool_mode
        self.slots = slots
        self.hard_tanh = hard_tanh
        self.dropout = dropout
        self.minibatch = minibatch
        self.max_epochs = max_epochs
        self.patience = patience
        self.init = init
        self.learning_rate = learning_rate
        self.rho = rho
        self.epsilon = epsilon
        self.input_scale = input_scale
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _spec(self) -> ModelSpec:
        return ModelSpec(self.arch, self.input_repr, self.hidden, self.filters,
                         self.filter_length, self.pool_length, self.conv_bias, self.pool_mode,
                         self.slots, self.hard_tanh, self.dropout, self.minibatch)

    def _config(self) -> TrainConfig:
        return TrainConfig(self.max_epochs, self.patience, int(self.random_state or 0),
                           self.init, self.learning_rate, self.rho, self.epsilon)

    def _scale_for(self, X) -> float:
        if self.input_scale is None:
            return 1.0
        if self.input_scale == "auto":
            rms = float(np.sqrt(np.mean(X * X)))
            return rms if rms > 0 else 1.0
        scale = float(self.input_scale)
        if not scale > 0:
            raise ValueError("input_scale must be positive, 'auto' or None")
        return scale

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = validate_data(self, X, y, dtype=np.float64)
        y = check_binary_labels(y, len(X))
        if (X_val is None) != (y_val is None):
            raise ValueError("pass both X_val and y_val or neither")
        spec, cfg = self._spec(), self._config()
        if X_val is None:
            X, X_val, y, y_val = train_test_split(
                X, y, test_size=self.validation_fraction, stratify=y,
                random_state=int(self.random_state or 0) % 2**32)
        else:
            X_val = validate_data(self, X_val, reset=False, dtype=np.float64)
            y_val = check_binary_labels(y_val, len(X_val))
        self.classes_ = np.array([0, 1])
        self.scale_ = self._scale_for(X)
        result = train(spec, ArraySplit(X / self.scale_, y, X_val / self.scale_, y_val), cfg)
        self.network_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_epochs_ = result.epochs_run
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        return self.network_.decision_function(X / self.scale_)

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        p = predict_scores(self.network_, X / self.scale_)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def save(self, path, meta: dict | None = None):
        """Write a checkpoint; ``meta`` is stored alongside and restored as ``meta_``."""
        check_is_fitted(self, "network_")
        self.network_.save(path, {"scale": self.scale_, "estimator": self.get_params(),
                                  "extra": dict(meta or {})})

    @classmethod
    def load(cls, path) -> "SleepQualityClassifier":
        net, meta = Network.load(path)
        est = cls(**meta.get("estimator", {"arch": net.spec.arch}))
        est.network_ = net
        est.scale_ = float(meta.get("scale", 1.0))
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = net.input_dim
        est.meta_ = meta.get("extra", {})
        return est
