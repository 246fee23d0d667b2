"""The five classifier architectures assembled from :mod:`actisleep.nn` kernels.

Every network maps an input matrix ``X`` of shape ``(B, d)`` to one logit
per row. How ``X`` is read depends on the architecture:

* ``lr``   -- the row itself is the representation fed to the output head.
* ``mlp``  -- one fully connected ReLU hidden layer over the whole row.
* ``cnn``  -- the row is a 1-D sequence; wide convolution, max-pooling of
  every feature map, then the concatenated pooled maps feed the head.
* ``rnn`` / ``lstm`` -- the row is cut into ``ceil(d / S)`` pseudo time
  steps of ``S`` minutes, run through the recurrent layer, and the hidden
  states are mean-pooled over time.

Dropout, when enabled, acts on the representation right before the head.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .nn import kernels as K
from .nn.checkpoint import load_checkpoint, save_checkpoint

ARCHS = ("lr", "mlp", "cnn", "rnn", "lstm")
REPRS = ("intensity4", "raw_padded", "pseudo_seq")
INITS = ("zero", "small_uniform", "auto")
SMALL_UNIFORM = 0.05

_ARCH_FIELDS = {
    "lr": {},
    "mlp": {"hidden": 15},
    "cnn": {"filters": 25, "filter_length": 5, "pool_length": 4,
            "conv_bias": False, "pool_mode": "block"},
    "rnn": {"hidden": 75, "slots": 50},
    "lstm": {"hidden": 100, "slots": 50, "hard_tanh": False},
}
_OPTIONAL = ("hidden", "filters", "filter_length", "pool_length", "conv_bias",
             "pool_mode", "slots", "hard_tanh")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture plus hyperparameters.

    Fields that do not apply to ``arch`` must stay ``None``; the applicable
    ones default to the best configurations reported for raw data.
    """

    arch: str
    input_repr: str | None = None
    hidden: int | None = None
    filters: int | None = None
    filter_length: int | None = None
    pool_length: int | None = None
    conv_bias: bool | None = None
    pool_mode: str | None = None
    slots: int | None = None
    hard_tanh: bool | None = None
    dropout: float = 0.0
    minibatch: int = 5

    def __post_init__(self):
        arch = str(self.arch).lower()
        if arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}; choose from {ARCHS}")
        object.__setattr__(self, "arch", arch)
        allowed = _ARCH_FIELDS[arch]
        for name in _OPTIONAL:
            value = getattr(self, name)
            if name not in allowed:
                if value is not None:
                    raise ValueError(f"{name} does not apply to arch {arch!r}")
            elif value is None:
                object.__setattr__(self, name, allowed[name])
        repr_ = self.input_repr or ("pseudo_seq" if arch in ("rnn", "lstm") else "raw_padded")
        if repr_ not in REPRS:
            raise ValueError(f"unknown input_repr {repr_!r}; choose from {REPRS}")
        if (repr_ == "pseudo_seq") != (arch in ("rnn", "lstm")):
            raise ValueError(f"arch {arch!r} cannot consume input_repr {repr_!r}")
        object.__setattr__(self, "input_repr", repr_)
        for name in ("hidden", "filters", "filter_length", "pool_length", "slots"):
            value = getattr(self, name)
            if value is not None and int(value) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.pool_mode not in (None, "block", "wide"):
            raise ValueError("pool_mode must be 'block' or 'wide'")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.minibatch < 1:
            raise ValueError("minibatch must be at least 1")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _head_size(spec: ModelSpec, input_dim: int) -> int:
    if spec.arch == "lr":
        return input_dim
    if spec.arch == "mlp":
        return spec.hidden
    if spec.arch == "cnn":
        m = input_dim + spec.filter_length - 1
        return spec.filters * K.pooled_length(m, spec.pool_length, spec.pool_mode)
    return spec.hidden


def param_shapes(spec: ModelSpec, input_dim: int) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every trainable array."""
    shapes: dict[str, tuple[int, ...]] = {}
    if spec.arch == "mlp":
        shapes["hidden.V"] = (input_dim, spec.hidden)
        shapes["hidden.b"] = (spec.hidden,)
    elif spec.arch == "cnn":
        shapes["conv.filters"] = (spec.filters, spec.filter_length, 1)
        if spec.conv_bias:
            shapes["conv.bias"] = (spec.filters,)
    elif spec.arch in ("rnn", "lstm"):
        k = 4 if spec.arch == "lstm" else 1
        shapes["rec.U"] = (k * spec.hidden, spec.hidden)
        shapes["rec.V"] = (k * spec.hidden, spec.slots)
        if spec.arch == "lstm":
            shapes["rec.b"] = (3 * spec.hidden,)
    shapes["head.w"] = (_head_size(spec, input_dim),)
    shapes["head.b"] = ()
    return shapes


def param_count(spec: ModelSpec, input_dim: int) -> int:
    return sum(math.prod(s) for s in param_shapes(spec, input_dim).values())


class Network:
    """Parameters plus forward/backward for one :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec, input_dim: int, params: dict[str, np.ndarray]):
        self.spec = spec
        self.input_dim = int(input_dim)
        expected = param_shapes(spec, self.input_dim)
        if set(params) != set(expected):
            raise ValueError(f"parameter names {sorted(params)} != {sorted(expected)}")
        for name, shape in expected.items():
            if np.shape(params[name]) != shape:
                raise ValueError(f"{name}: shape {np.shape(params[name])} != {shape}")
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    # layer views share memory with self.params so in-place updates apply
    def _head(self):
        return K.OutputHead(self.params["head.w"], float(self.params["head.b"]))

    def _recurrent(self):
        s = self.spec
        return K.RecurrentLayer(
            self.params["rec.U"], self.params["rec.V"], self.params.get("rec.b"),
            kind="lstm" if s.arch == "lstm" else "simple", activation="relu",
            cell_activation="hard_tanh" if s.hard_tanh else "tanh")

    def _pseudo(self, X):
        S = self.spec.slots
        T = -(-X.shape[1] // S)
        padded = np.zeros((X.shape[0], T * S))
        padded[:, :X.shape[1]] = X
        return padded.reshape(X.shape[0], T, S)

    def forward(self, X, training: bool = False, rng=None):
        """Logits ``(B,)`` and a cache for :meth:`backward`."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"expected input of shape (B, {self.input_dim}), got {X.shape}")
        s = self.spec
        cache = {"X": X}
        if s.arch == "lr":
            phi = X
        elif s.arch == "mlp":
            layer = K.DenseLayer(self.params["hidden.V"], self.params["hidden.b"], "relu")
            phi = K.dense_forward(layer, X)
        elif s.arch == "cnn":
            layer = K.Conv1DLayer(self.params["conv.filters"], "relu", self.params.get("conv.bias"))
            maps = K.conv1d_wide_forward(layer, X[:, :, None])
            pooled = K.max_pool(maps, s.pool_length, s.pool_mode)       # (B, M', N)
            cache["maps"] = maps
            phi = pooled.transpose(0, 2, 1).reshape(len(X), -1)          # map-major
        else:
            H, rec_cache = K.recurrent_forward(self._recurrent(), self._pseudo(X))
            cache["H_shape"], cache["rec"] = H.shape, rec_cache
            phi = K.mean_pool_time(H)
        phi, mask = K.dropout_forward(phi, s.dropout, rng, training)
        cache["phi"], cache["mask"] = phi, mask
        return K.output_logit(self._head(), phi), cache

    def backward(self, cache, dlogits) -> dict[str, np.ndarray]:
        s = self.spec
        grads = {}
        dphi, grads["head.w"], db = K.output_backward(self._head(), cache["phi"], dlogits)
        grads["head.b"] = np.array(db)
        dphi = K.dropout_backward(cache["mask"], dphi)
        X = cache["X"]
        if s.arch == "mlp":
            layer = K.DenseLayer(self.params["hidden.V"], self.params["hidden.b"], "relu")
            _, grads["hidden.V"], grads["hidden.b"] = K.dense_backward(layer, X, dphi)
        elif s.arch == "cnn":
            maps = cache["maps"]
            dpooled = dphi.reshape(len(X), s.filters, -1).transpose(0, 2, 1)
            dmaps = K.max_pool_backward(maps, s.pool_length, dpooled, s.pool_mode)
            layer = K.Conv1DLayer(self.params["conv.filters"], "relu", self.params.get("conv.bias"))
            _, grads["conv.filters"], dbias = K.conv1d_wide_backward(layer, X[:, :, None], dmaps)
            if s.conv_bias:
                grads["conv.bias"] = dbias
        elif s.arch in ("rnn", "lstm"):
            dH = K.mean_pool_time_backward(cache["H_shape"], dphi)
            _, g = K.recurrent_backward(self._recurrent(), cache["rec"], dH)
            for k, v in g.items():
                grads[f"rec.{k}"] = v
        return grads

    def decision_function(self, X) -> np.ndarray:
        return self.forward(X, training=False)[0]

    def predict_proba(self, X) -> np.ndarray:
        """Probability of Good for each row; dropout is off."""
        return K.sigmoid(self.decision_function(X))

    def save(self, path, meta: dict | None = None):
        header = {"spec": self.spec.to_dict(), "input_dim": self.input_dim}
        header.update(meta or {})
        save_checkpoint(path, self.params, header)

    @classmethod
    def load(cls, path) -> tuple["Network", dict]:
        params, meta = load_checkpoint(path)
        net = cls(ModelSpec.from_dict(meta["spec"]), meta["input_dim"], params)
        return net, meta


def init_params(spec: ModelSpec, input_dim: int, init: str = "auto", rng=None) -> dict[str, np.ndarray]:
    """Zero or ``U(-0.05, 0.05)`` initial weights; biases always start at zero.

    ``auto`` gives zeros to logistic regression and small uniform weights to
    every architecture with a hidden layer, where all-zero weights leave the
    ReLU units with identically zero gradients.
    """
    if init not in INITS:
        raise ValueError(f"init must be one of {INITS}")
    if init == "auto":
        init = "zero" if spec.arch == "lr" else "small_uniform"
    params = {}
    for name, shape in param_shapes(spec, input_dim).items():
        is_bias = name.endswith((".b", ".bias"))
        if init == "zero" or is_bias:
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-SMALL_UNIFORM, SMALL_UNIFORM, size=shape)
    return params


def build(spec: ModelSpec, input_dim: int, init: str = "auto", rng=None) -> Network:
    if init in ("small_uniform", "auto") and rng is None:
        rng = np.random.default_rng(0)
    return Network(spec, input_dim, init_params(spec, input_dim, init, rng))


def predict(model: Network, X) -> np.ndarray:
    return model.predict_proba(X)


# Best settings reported for raw accelerometer data (lr uses the same
# minibatch/dropout pair on both input types).
PAPER_BEST = {
    "lr": dict(minibatch=5, dropout=0.5),
    "mlp": dict(hidden=15, minibatch=20, dropout=0.1),
    "cnn": dict(filters=25, filter_length=5, pool_length=4, minibatch=5, dropout=0.0),
    "rnn": dict(hidden=75, minibatch=5, dropout=0.1),
    "lstm": dict(hidden=100, minibatch=5, dropout=0.5),
}
PAPER_BEST_INTENSITY_MLP = dict(hidden=15, minibatch=5, dropout=0.3)


def paper_best_spec(arch: str, **overrides) -> ModelSpec:
    kwargs = dict(PAPER_BEST[arch.lower()])
    kwargs.update(overrides)
    return ModelSpec(arch=arch, **kwargs)
