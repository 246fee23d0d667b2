import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from actisleep.models import (ARCHS, PAPER_BEST, ModelSpec, Network, build, param_count,
                              param_shapes, paper_best_spec, predict)
from actisleep.nn.kernels import RecurrentLayer, cross_entropy_from_logits, rnn_step

from oracles import max_relative_error, numeric_gradient

SMALL = {
    "lr": ModelSpec("lr"),
    "mlp": ModelSpec("mlp", hidden=4),
    "cnn": ModelSpec("cnn", filters=3, filter_length=3, pool_length=2),
    "rnn": ModelSpec("rnn", hidden=3, slots=4),
    "lstm": ModelSpec("lstm", hidden=3, slots=4),
}


def _random_net(spec, d, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    params = {k: scale * rng.standard_normal(s) for k, s in param_shapes(spec, d).items()}
    return Network(spec, d, params)


# -- specs and parameter counts -----------------------------------------------------

def test_parameter_counts():
    assert param_count(ModelSpec("lr", input_repr="intensity4"), 4) == 5
    assert param_count(ModelSpec("mlp", hidden=15, input_repr="intensity4"), 4) == 4 * 15 + 15 + 15 + 1
    cnn = ModelSpec("cnn", filters=25, filter_length=5, pool_length=4)
    shapes = param_shapes(cnn, 100)
    assert shapes["conv.filters"] == (25, 5, 1) and "conv.bias" not in shapes
    # (100 + 5 - 1) / 4 = 26 pooled features per map
    assert param_count(cnn, 100) == 25 * 5 + 25 * 26 + 1
    with_bias = ModelSpec("cnn", filters=25, filter_length=5, pool_length=4, conv_bias=True)
    assert param_count(with_bias, 100) == param_count(cnn, 100) + 25
    assert param_count(ModelSpec("rnn", hidden=75, slots=50), 2470) == 75 * 75 + 75 * 50 + 75 + 1
    lstm = ModelSpec("lstm", hidden=100, slots=50)
    assert param_count(lstm, 2470) == 4 * (100 * 100 + 100 * 50) + 300 + 100 + 1


def test_spec_defaults_and_validation():
    assert ModelSpec("CNN").arch == "cnn"
    assert ModelSpec("rnn").input_repr == "pseudo_seq"
    assert ModelSpec("mlp").input_repr == "raw_padded"
    for bad in (dict(arch="svm"), dict(arch="mlp", pool_length=2), dict(arch="lr", hidden=3),
                dict(arch="cnn", input_repr="pseudo_seq"), dict(arch="rnn", input_repr="raw_padded"),
                dict(arch="mlp", hidden=0), dict(arch="lr", dropout=1.0),
                dict(arch="lr", minibatch=0), dict(arch="cnn", pool_mode="avg")):
        with pytest.raises(ValueError):
            ModelSpec(**bad)
    spec = paper_best_spec("lstm")
    assert ModelSpec.from_dict(spec.to_dict()) == spec


def test_paper_best_configurations():
    cnn = paper_best_spec("cnn")
    assert (cnn.filters, cnn.filter_length, cnn.pool_length, cnn.minibatch, cnn.dropout) == (25, 5, 4, 5, 0.0)
    mlp = paper_best_spec("mlp")
    assert (mlp.hidden, mlp.minibatch, mlp.dropout) == (15, 20, 0.1)
    assert (paper_best_spec("rnn").hidden, paper_best_spec("rnn").dropout) == (75, 0.1)
    assert (paper_best_spec("lstm").hidden, paper_best_spec("lstm").dropout) == (100, 0.5)
    assert set(PAPER_BEST) == set(ARCHS)


# -- prediction ----------------------------------------------------------------------

@pytest.mark.parametrize("arch", ARCHS)
def test_zero_model_predicts_half(arch):
    net = build(SMALL[arch], 10, init="zero")
    X = np.random.default_rng(0).random((5, 10)) * 100
    np.testing.assert_array_equal(predict(net, X), np.full(5, 0.5))


@pytest.mark.parametrize("arch", ARCHS)
def test_predict_is_pure_and_in_unit_interval(arch):
    net = _random_net(SMALL[arch], 10)
    X = np.random.default_rng(1).random((6, 10))
    a, b = net.predict_proba(X), net.predict_proba(X)
    np.testing.assert_array_equal(a, b)
    assert ((a > 0) & (a < 1)).all()
    with pytest.raises(ValueError):
        net.predict_proba(np.zeros((2, 11)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_cnn_decision_invariant_to_positive_scaling(seed, c):
    spec = ModelSpec("cnn", filters=4, filter_length=3, pool_length=2)
    net = _random_net(spec, 12, seed)
    net.params["head.b"] = np.array(0.0)
    X = np.random.default_rng(seed + 1).standard_normal((8, 12))
    logits, scaled = net.decision_function(X), net.decision_function(c * X)
    np.testing.assert_allclose(scaled, c * logits, rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(net.predict_proba(c * X) >= 0.5, net.predict_proba(X) >= 0.5)


@pytest.mark.parametrize("arch", ["rnn", "lstm"])
def test_full_length_slot_is_single_step(arch):
    d = 9
    spec = ModelSpec(arch, hidden=3, slots=d)
    net = _random_net(spec, d, seed=3)
    X = np.random.default_rng(4).standard_normal((2, d))
    _, cache = net.forward(X)
    assert cache["H_shape"] == (2, 1, 3)
    if arch == "rnn":
        layer = RecurrentLayer(net.params["rec.U"], net.params["rec.V"])
        np.testing.assert_allclose(cache["phi"], rnn_step(layer, np.zeros((2, 3)), X), rtol=1e-14)


def test_dropout_only_in_training():
    spec = ModelSpec("mlp", hidden=6, dropout=0.5)
    net = _random_net(spec, 5)
    X = np.ones((4, 5))
    train_logits, _ = net.forward(X, training=True, rng=np.random.default_rng(0))
    assert not np.allclose(train_logits, net.decision_function(X))
    np.testing.assert_array_equal(net.decision_function(X), net.decision_function(X))


# -- checkpoints ---------------------------------------------------------------------

@pytest.mark.parametrize("arch", ARCHS)
def test_checkpoint_round_trip_bit_exact(arch, tmp_path):
    net = _random_net(SMALL[arch], 10, seed=7)
    X = np.random.default_rng(8).random((5, 10))
    net.save(tmp_path / "a.ckpt", {"note": "x"})
    loaded, meta = Network.load(tmp_path / "a.ckpt")
    assert meta["note"] == "x" and loaded.spec == net.spec
    for k in net.params:
        assert loaded.params[k].tobytes() == net.params[k].tobytes()
    assert loaded.predict_proba(X).tobytes() == net.predict_proba(X).tobytes()
    loaded.save(tmp_path / "b.ckpt", {"note": "x"})
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_network_rejects_wrong_params():
    spec = SMALL["mlp"]
    params = {k: np.zeros(s) for k, s in param_shapes(spec, 3).items()}
    params["hidden.V"] = np.zeros((3, 5))
    with pytest.raises(ValueError):
        Network(spec, 3, params)
    with pytest.raises(ValueError):
        Network(spec, 3, {"head.w": np.zeros(4)})


# -- end-to-end gradients -------------------------------------------------------------

@pytest.mark.parametrize("arch", ARCHS + ("cnn_wide",))
def test_network_backward_matches_finite_differences(arch):
    spec = (ModelSpec("cnn", filters=2, filter_length=3, pool_length=2, pool_mode="wide", conv_bias=True)
            if arch == "cnn_wide" else SMALL[arch])
    d = 7
    net = _random_net(spec, d, seed=11)
    rng = np.random.default_rng(12)
    X, y = rng.standard_normal((3, d)), rng.integers(0, 2, 3)
    logits, cache = net.forward(X)
    grads = net.backward(cache, cross_entropy_from_logits(logits, y)[1])
    f = lambda: cross_entropy_from_logits(net.decision_function(X), y)[0]
    for name, p in net.params.items():
        if p.ndim == 0:  # the head bias: perturb through a 1-element view
            box = p.reshape(1)
            numeric = numeric_gradient(f, box)
        else:
            numeric = numeric_gradient(f, p)
        assert max_relative_error(grads[name], numeric) < 1e-6, name
