"""Element-wise activations and their derivatives w.r.t. the pre-activation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def hard_sigmoid(z):
    return np.clip(0.2 * np.asarray(z, dtype=np.float64) + 0.5, 0.0, 1.0)


def hard_tanh(z):
    return np.clip(np.asarray(z, dtype=np.float64), -1.0, 1.0)


def _sigmoid_grad(z):
    s = sigmoid(z)
    return s * (1.0 - s)


@dataclass(frozen=True)
class Activation:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]

    def __call__(self, z):
        return self.fn(z)


ACTIVATIONS = {
    "identity": Activation("identity", lambda z: np.asarray(z, dtype=np.float64),
                           lambda z: np.ones_like(z, dtype=np.float64)),
    "relu": Activation("relu", lambda z: np.maximum(z, 0.0),
                       lambda z: (np.asarray(z) > 0).astype(np.float64)),
    "sigmoid": Activation("sigmoid", sigmoid, _sigmoid_grad),
    "tanh": Activation("tanh", np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "hard_sigmoid": Activation("hard_sigmoid", hard_sigmoid,
                               lambda z: np.where(np.abs(z) < 2.5, 0.2, 0.0)),
    "hard_tanh": Activation("hard_tanh", hard_tanh,
                            lambda z: (np.abs(z) < 1.0).astype(np.float64)),
}


def get_activation(name) -> Activation:
    if isinstance(name, Activation):
        return name
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None
