import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actisleep.models import ModelSpec, paper_best_spec
from actisleep.training import (ArraySplit, DivergenceError, GridSpec, OptimizerState,
                                TrainConfig, grid_search, mean_loss, paper_grid, predict_scores,
                                rmsprop_update, train)
from actisleep.evaluation import auc_score


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    X = np.where(y[:, None] == 1, 2.0, -2.0) + 0.3 * rng.standard_normal((n, 2))
    return X, y


def _noisy(n=120, d=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = (X[:, 0] + 1.5 * rng.standard_normal(n) > 0).astype(int)
    return X, y


def _split(X, y, frac=0.75):
    k = int(len(X) * frac)
    return ArraySplit(X[:k], y[:k], X[k:], y[k:])


# -- RMSprop -----------------------------------------------------------------------

def test_rmsprop_first_step():
    for g in (0.5, -3.0, 1e-5):
        params = {"w": np.array(1.0)}
        rmsprop_update(OptimizerState(), params, {"w": np.array(g)})
        assert params["w"] - 1.0 == pytest.approx(-0.001 * g / np.sqrt(0.1 * g * g + 1e-8), rel=1e-12)


def test_rmsprop_zero_gradient_decays_accumulator():
    state = OptimizerState()
    params = {"w": np.array([1.0, 2.0])}
    rmsprop_update(state, params, {"w": np.array([1.0, 1.0])})
    before, acc = params["w"].copy(), state.accumulators["w"].copy()
    rmsprop_update(state, params, {"w": np.zeros(2)})
    np.testing.assert_array_equal(params["w"], before)
    np.testing.assert_allclose(state.accumulators["w"], 0.9 * acc, rtol=1e-15)


def test_rmsprop_repeated_gradient_shrinks_step():
    state = OptimizerState()
    params = {"w": np.array(0.0)}
    rmsprop_update(state, params, {"w": np.array(2.0)})
    first = -float(params["w"])
    rmsprop_update(state, params, {"w": np.array(2.0)})
    second = -float(params["w"]) - first
    assert 0 < second < first


def test_rmsprop_rejects_nan_and_bad_shapes():
    with pytest.raises(DivergenceError, match="w"):
        rmsprop_update(OptimizerState(), {"w": np.zeros(2)}, {"w": np.array([1.0, np.nan])})
    with pytest.raises(ValueError):
        rmsprop_update(OptimizerState(), {"w": np.zeros(2)}, {"w": np.zeros(3)})
    with pytest.raises(ValueError):
        OptimizerState(rho=1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e6, 1e6, allow_subnormal=False))
def test_rmsprop_first_step_bound(g):
    params = {"w": np.array(0.0)}
    state = OptimizerState()
    rmsprop_update(state, params, {"w": np.array(g)})
    assert np.isfinite(params["w"])
    assert (state.accumulators["w"] >= 0).all()
    if g != 0:
        # lr*|g|/sqrt((1-rho) g^2) simplifies to lr/sqrt(1-rho)
        assert abs(float(params["w"])) <= 0.001 / np.sqrt(0.1) * (1 + 1e-12)


# -- training loop -----------------------------------------------------------------

def test_separable_lr_converges():
    X, y = _separable()
    result = train(ModelSpec("lr"), _split(X, y), TrainConfig(max_epochs=50, patience=50))
    losses = [h["train_loss"] for h in result.history]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 0.1


@pytest.mark.parametrize("patience", [0, 1, 3])
def test_patience_contract(patience):
    X, y = _noisy()
    result = train(ModelSpec("lr", minibatch=5), _split(X, y),
                   TrainConfig(max_epochs=50, patience=patience, seed=2, init="small_uniform",
                               learning_rate=0.05))
    assert result.epochs_run < 50
    assert result.epochs_run == result.best_epoch + patience + 1
    vals = [h["val_loss"] for h in result.history]
    assert result.best_val_loss == min(vals)
    # the restored parameters are the best epoch's
    split = _split(X, y)
    assert mean_loss(result.model, split.X_val, split.y_val) == pytest.approx(min(vals), rel=1e-12)


def test_same_seed_same_history():
    X, y = _noisy()
    spec = ModelSpec("mlp", hidden=4, dropout=0.3)
    cfg = TrainConfig(max_epochs=6, seed=11)
    a, b = train(spec, _split(X, y), cfg), train(spec, _split(X, y), cfg)
    assert a.history == b.history
    c = train(spec, _split(X, y), TrainConfig(max_epochs=6, seed=12))
    assert c.history != a.history


def test_zero_init_keeps_hidden_units_identical():
    X, y = _noisy()
    result = train(ModelSpec("mlp", hidden=6), _split(X, y), TrainConfig(max_epochs=5, init="zero"))
    V, b = result.model.params["hidden.V"], result.model.params["hidden.b"]
    assert (V == V[:, :1]).all() and (b == b[0]).all()
    result = train(ModelSpec("mlp", hidden=6), _split(X, y),
                   TrainConfig(max_epochs=5, init="small_uniform"))
    V = result.model.params["hidden.V"]
    assert not (V == V[:, :1]).all()


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=-1)
    with pytest.raises(ValueError):
        ArraySplit(np.zeros((0, 2)), np.zeros(0), np.zeros((1, 2)), np.zeros(1))


# -- grid search -------------------------------------------------------------------

def test_one_point_grid_equals_direct_training():
    X, y = _noisy()
    split = _split(X, y)
    cfg = TrainConfig(max_epochs=5, seed=4)
    res = grid_search("mlp", GridSpec({"hidden": (3,)}), split, cfg)
    direct = train(ModelSpec("mlp", hidden=3), split, cfg)
    assert len(res.rows) == 1 and res.rows[0]["rank"] == 1
    assert res.best.history == direct.history
    assert res.rows[0]["val_auc"] == auc_score(predict_scores(direct.model, split.X_val), split.y_val)


def test_grid_touches_cartesian_product_once():
    X, y = _noisy()
    grid = GridSpec({"hidden": (2, 3), "minibatch": (5, 10), "dropout": (0.0, 0.2)})
    res = grid_search("mlp", grid, _split(X, y), TrainConfig(max_epochs=2))
    seen = sorted((r["hidden"], r["minibatch"], r["dropout"]) for r in res.rows)
    expected = sorted((h, m, d) for h in (2, 3) for m in (5, 10) for d in (0.0, 0.2))
    assert seen == expected and len(grid) == 8
    assert [r["rank"] for r in res.rows] == list(range(1, 9))
    aucs = [r["val_auc"] for r in res.rows]
    assert aucs == sorted(aucs, reverse=True)


def test_grid_prefers_sane_over_crippling_dropout():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((300, 10))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)  # not linearly separable
    split = ArraySplit(X[:200], y[:200], X[200:], y[200:])
    res = grid_search("mlp", GridSpec({"dropout": (0.9, 0.0)}),
                      split, TrainConfig(max_epochs=30, seed=1, learning_rate=0.01),
                      base={"hidden": 10})
    assert res.best_spec.dropout == 0.0
    assert res.rows[0]["val_auc"] > res.rows[1]["val_auc"]


def test_grid_parallel_matches_serial():
    X, y = _noisy()
    grid = GridSpec({"hidden": (2, 3)})
    a = grid_search("mlp", grid, _split(X, y), TrainConfig(max_epochs=2), jobs=2)
    b = grid_search("mlp", grid, _split(X, y), TrainConfig(max_epochs=2), jobs=1)
    assert a.rows == b.rows


def test_paper_grids():
    assert len(paper_grid("cnn")) == 6 * 4 * 4 * 4 * 6
    assert len(paper_grid("lr")) == 24
    cnn_best = paper_best_spec("cnn")
    point = {"filters": 25, "filter_length": 5, "pool_length": 4, "minibatch": 5, "dropout": 0.0}
    assert point in paper_grid("cnn").points()
    assert ModelSpec.from_dict({"arch": "cnn", **point}) == cnn_best
    with pytest.raises(ValueError):
        GridSpec({})
    with pytest.raises(ValueError):
        GridSpec({"hidden": ()})
