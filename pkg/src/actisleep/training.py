"""RMSprop, minibatch training with early stopping, and grid search."""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from ._random import derive_seed, make_rng
from .evaluation import auc_score, evaluate
from .models import ModelSpec, Network, build
from .nn.kernels import cross_entropy_from_logits

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class OptimizerState:
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-8
    accumulators: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ValueError("learning_rate and epsilon must be positive")


def rmsprop_update(state: OptimizerState, params: dict, grads: dict) -> dict:
    """In-place RMSprop step on every array in ``params``; returns ``params``.

    ``acc <- rho*acc + (1-rho)*g**2`` then ``theta <- theta - lr*g/sqrt(acc+eps)``.
    """
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        p = params[name]
        if g.shape != np.shape(p):
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {np.shape(p)}")
        if not np.isfinite(g).all():
            bad = int((~np.isfinite(g)).sum())
            raise DivergenceError(f"non-finite gradient for {name!r} ({bad} of {g.size} entries)")
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(g)
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        step = state.learning_rate * g / np.sqrt(acc + state.epsilon)
        if isinstance(p, np.ndarray):
            p -= step
        else:
            params[name] = np.asarray(p - step)
    return params


@dataclass(frozen=True)
class TrainConfig:
    """Loop settings. Minibatch size and dropout live on :class:`ModelSpec`."""

    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    init: str = "auto"
    learning_rate: float = 0.001
    rho: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")


@dataclass
class ArraySplit:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray | None = None
    y_test: np.ndarray | None = None

    def __post_init__(self):
        for name in ("X_train", "X_val", "X_test"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.float64))
        for name in ("y_train", "y_val", "y_test"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.float64).reshape(-1))
        if len(self.X_train) == 0 or len(self.X_val) == 0:
            raise ValueError("training and validation partitions must be non-empty")


@dataclass
class TrainResult:
    model: Network
    history: list[dict]
    best_epoch: int
    spec: ModelSpec
    config: TrainConfig

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def best_val_loss(self) -> float:
        return self.history[self.best_epoch - 1]["val_loss"]


def mean_loss(model: Network, X, y, batch: int = 512) -> float:
    total = 0.0
    for start in range(0, len(X), batch):
        logits = model.decision_function(X[start:start + batch])
        total += cross_entropy_from_logits(logits, y[start:start + batch])[0]
    if not np.isfinite(total):
        raise DivergenceError("validation loss is not finite")
    return total / len(X)


def predict_scores(model: Network, X, batch: int = 512) -> np.ndarray:
    return np.concatenate([model.predict_proba(X[s:s + batch]) for s in range(0, len(X), batch)])


def train(spec: ModelSpec, split: ArraySplit, cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Minimise summed cross-entropy with RMSprop over shuffled minibatches.

    After every epoch the mean validation loss is measured; training stops at
    ``max_epochs`` or after ``patience`` consecutive epochs without strict
    improvement, and the parameters of the best validation epoch are kept.
    Epochs in ``history`` are numbered from 1.
    """
    X, y = split.X_train, split.y_train
    model = build(spec, X.shape[1], cfg.init, make_rng(derive_seed(cfg.seed, "init")))
    rng = make_rng(derive_seed(cfg.seed, "batches"))
    opt = OptimizerState(cfg.learning_rate, cfg.rho, cfg.epsilon)
    history = []
    best_loss, best_epoch, best_params, waited = np.inf, 0, None, 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(X))
        for start in range(0, len(X), spec.minibatch):
            idx = perm[start:start + spec.minibatch]
            logits, cache = model.forward(X[idx], training=True, rng=rng)
            loss, dlogits = cross_entropy_from_logits(logits, y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"loss became {loss} in epoch {epoch}")
            rmsprop_update(opt, model.params, model.backward(cache, dlogits))
        record = {"epoch": epoch,
                  "train_loss": mean_loss(model, X, y),
                  "val_loss": mean_loss(model, split.X_val, split.y_val)}
        history.append(record)
        log.debug("%s epoch %d: %s", spec.arch, epoch, record)
        if record["val_loss"] < best_loss:
            best_loss, best_epoch, waited = record["val_loss"], epoch, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            waited += 1
            if waited > cfg.patience:
                break
    model.params = best_params
    return TrainResult(model, history, best_epoch, spec, cfg)


@dataclass(frozen=True)
class GridSpec:
    """Axes of a hyperparameter grid: ``ModelSpec`` field name -> candidate values."""

    axes: dict

    def __post_init__(self):
        if not self.axes:
            raise ValueError("grid has no axes")
        for name, values in self.axes.items():
            if len(values) == 0:
                raise ValueError(f"grid axis {name!r} is empty")

    def points(self) -> list[dict]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.axes.values())]

    def __len__(self) -> int:
        return int(np.prod([len(v) for v in self.axes.values()]))


DROPOUTS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
MINIBATCHES = (5, 10, 15, 20)


def paper_grid(arch: str) -> GridSpec:
    """The hyperparameter ranges explored in the original study."""
    arch = arch.lower()
    axes: dict = {}
    if arch == "mlp":
        axes["hidden"] = (2, 3, 5, 10, 15, 20)
    elif arch == "cnn":
        axes["filters"] = (25, 50, 75, 100, 125, 150)
        axes["filter_length"] = (2, 3, 4, 5)
        axes["pool_length"] = (2, 3, 4, 5)
    elif arch in ("rnn", "lstm"):
        axes["hidden"] = (25, 50, 75, 85, 100)
        axes["slots"] = (25, 50, 75, 100)
    elif arch != "lr":
        raise ValueError(f"unknown arch {arch!r}")
    axes["minibatch"] = MINIBATCHES
    axes["dropout"] = DROPOUTS
    return GridSpec(axes)


@dataclass
class GridResult:
    rows: list[dict]
    best: TrainResult
    test_report: object = None

    @property
    def best_spec(self) -> ModelSpec:
        return self.best.spec


def _run_point(args):
    base, point, split, cfg = args
    spec = ModelSpec.from_dict({**base, **point})
    result = train(spec, split, cfg)
    val_scores = predict_scores(result.model, split.X_val)
    try:
        val_auc = auc_score(val_scores, split.y_val)
    except ValueError:
        val_auc = float("nan")
    return point, result, val_auc


def grid_search(arch: str, grid: GridSpec, split: ArraySplit, cfg: TrainConfig = TrainConfig(),
                base: dict | None = None, jobs: int = 1) -> GridResult:
    """Train every grid point with the same seed; rank by validation AUC.

    Ties keep grid order. Test metrics are computed for the winner only.
    """
    base = {"arch": arch, **(base or {})}
    tasks = [(base, p, split, cfg) for p in grid.points()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_point, tasks))
    else:
        outcomes = [_run_point(t) for t in tasks]
    rows = []
    for order, (point, result, val_auc) in enumerate(outcomes):
        rows.append({"rank": None, "order": order, **point, "val_auc": val_auc,
                     "val_loss": result.best_val_loss, "best_epoch": result.best_epoch,
                     "epochs_run": result.epochs_run, "n_params": result.model.n_params})
    ranking = sorted(range(len(rows)),
                     key=lambda i: (-(rows[i]["val_auc"] if np.isfinite(rows[i]["val_auc"]) else -np.inf), i))
    for rank, i in enumerate(ranking, start=1):
        rows[i]["rank"] = rank
    rows = [rows[i] for i in ranking]
    best = outcomes[ranking[0]][1]
    report = None
    if split.X_test is not None:
        report = evaluate(predict_scores(best.model, split.X_test), split.y_test)
    return GridResult(rows, best, report)
