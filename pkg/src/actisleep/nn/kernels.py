"""Layer forward/backward kernels.

Arrays are float64 with a leading batch axis: dense inputs are ``(B, in)``,
sequences ``(B, T, D)``. Every backward pass is derived by hand and returns
the gradient w.r.t. the layer input followed by the parameter gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .activations import get_activation, sigmoid

PROB_CLAMP = 1e-12
LSTM_GATES = ("input", "forget", "cell", "output")


def _check(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


@dataclass
class DenseLayer:
    """``y = f(x V + b)``; ``V`` has shape ``(in, out)``."""

    V: np.ndarray
    b: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        _check(self.V.ndim == 2 and self.b.shape == (self.V.shape[1],),
               f"inconsistent dense shapes V{self.V.shape} b{self.b.shape}")


def dense_forward(layer: DenseLayer, x):
    x = np.asarray(x, dtype=np.float64)
    _check(x.shape[-1] == layer.V.shape[0],
           f"input dim {x.shape[-1]} != layer in-dim {layer.V.shape[0]}")
    return get_activation(layer.activation)(x @ layer.V + layer.b)


def dense_backward(layer: DenseLayer, x, dy):
    """Returns ``(dx, dV, db)``."""
    x = np.asarray(x, dtype=np.float64)
    x2 = np.atleast_2d(x)
    z = x2 @ layer.V + layer.b
    dz = np.atleast_2d(dy) * get_activation(layer.activation).grad(z)
    dx = (dz @ layer.V.T).reshape(x.shape)
    return dx, x2.T @ dz, dz.sum(axis=0)


@dataclass
class Conv1DLayer:
    """``N`` filters of length ``L`` over ``D``-dimensional steps.

    ``filters`` has shape ``(N, L, D)``; ``filters[i, l]`` multiplies the
    ``l``-th vector of each window (oldest first). ``bias`` is optional.
    """

    filters: np.ndarray
    activation: str = "relu"
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.filters = np.asarray(self.filters, dtype=np.float64)
        if self.filters.ndim == 2:
            self.filters = self.filters[:, :, None]
        _check(self.filters.ndim == 3, "filters must have shape (N, L, D)")
        _check(self.filters.shape[1] >= 1, "filter length L must be at least 1")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
            _check(self.bias.shape == (self.filters.shape[0],), "one bias per filter")

    @property
    def length(self) -> int:
        return self.filters.shape[1]


def _as_batch_seq(X):
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 2
    if X.ndim == 1:
        X, squeeze = X[:, None], True
    if squeeze:
        X = X[None]
    _check(X.ndim == 3, "sequence input must be (T, D) or (B, T, D)")
    return X, squeeze


def _wide_windows(X, L):
    """``(B, T+L-1, L*D)``; window ``t`` covers steps ``t-L+1 .. t`` zero-padded."""
    B, T, D = X.shape
    padded = np.zeros((B, T + 2 * (L - 1), D))
    padded[:, L - 1:L - 1 + T] = X
    win = sliding_window_view(padded, L, axis=1)          # (B, T+L-1, D, L)
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B, T + L - 1, L * D)


def _conv_pre(layer, X):
    N, L, D = layer.filters.shape
    _check(X.shape[2] == D, f"input dim {X.shape[2]} != filter dim {D}")
    win = _wide_windows(X, L)
    z = win @ layer.filters.reshape(N, L * D).T
    if layer.bias is not None:
        z = z + layer.bias
    return win, z


def conv1d_wide_forward(layer: Conv1DLayer, X):
    """Wide convolution: maps of length ``T + L - 1``, shape ``(B, T+L-1, N)``."""
    X, squeeze = _as_batch_seq(X)
    _, z = _conv_pre(layer, X)
    h = get_activation(layer.activation)(z)
    return h[0] if squeeze else h


def conv1d_wide_backward(layer: Conv1DLayer, X, dH):
    """Returns ``(dX, dfilters, dbias)``; ``dbias`` is None without a bias."""
    X, squeeze = _as_batch_seq(X)
    dH = np.asarray(dH, dtype=np.float64)
    if squeeze:
        dH = dH[None]
    N, L, D = layer.filters.shape
    B, T, _ = X.shape
    win, z = _conv_pre(layer, X)
    dz = dH * get_activation(layer.activation).grad(z)          # (B, M, N)
    dfilters = (dz.reshape(-1, N).T @ win.reshape(-1, L * D)).reshape(N, L, D)
    dwin = (dz @ layer.filters.reshape(N, L * D)).reshape(B, T + L - 1, L, D)
    dpad = np.zeros((B, T + 2 * (L - 1), D))
    for l in range(L):
        dpad[:, l:l + T + L - 1] += dwin[:, :, l]
    dX = dpad[:, L - 1:L - 1 + T]
    dbias = dz.sum(axis=(0, 1)) if layer.bias is not None else None
    return (dX[0] if squeeze else dX), dfilters, dbias


def pooled_length(m: int, p: int, mode: str = "block") -> int:
    return m if mode == "wide" else -(-m // p)


def _pool_windows(h, p, mode):
    """Windows along axis 1 of ``(B, M, N)``, padded with -inf: ``(B, M', p, N)``."""
    B, M, N = h.shape
    if mode == "block":
        n_out = -(-M // p)
        padded = np.full((B, n_out * p, N), -np.inf)
        padded[:, :M] = h
        return padded.reshape(B, n_out, p, N)
    if mode == "wide":
        padded = np.full((B, M + p - 1, N), -np.inf)
        padded[:, p - 1:] = h
        return sliding_window_view(padded, p, axis=1).transpose(0, 1, 3, 2)
    raise ValueError(f"unknown pooling mode {mode!r}")


def _as_batch_map(h):
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 1:
        return h[None, :, None], 1
    if h.ndim == 2:
        return h[None], 2
    return h, 3


def _restore(a, ndim):
    return a[0, :, 0] if ndim == 1 else a[0] if ndim == 2 else a


def max_pool(h, p: int, mode: str = "block"):
    """Max over windows of ``p`` consecutive features along the time axis.

    ``block`` uses non-overlapping windows (the last one may be partial).
    ``wide`` slides a window ending at every position, treating features
    before the start as absent, so the feature count is unchanged.
    """
    _check(int(p) >= 1, "pool length p must be at least 1")
    hb, ndim = _as_batch_map(h)
    return _restore(_pool_windows(hb, int(p), mode).max(axis=2), ndim)


def max_pool_backward(h, p: int, dpooled, mode: str = "block"):
    """Route each pooled gradient to its window's argmax (first index on ties)."""
    _check(int(p) >= 1, "pool length p must be at least 1")
    p = int(p)
    hb, ndim = _as_batch_map(h)
    dp, _ = _as_batch_map(dpooled)
    B, M, N = hb.shape
    win = _pool_windows(hb, p, mode)
    arg = win.argmax(axis=2)                               # (B, M', N)
    n_out = arg.shape[1]
    offset = np.arange(n_out)[None, :, None] * (p if mode == "block" else 1)
    src = offset + arg - (p - 1 if mode == "wide" else 0)  # index into h
    dh = np.zeros((B, M, N))
    bi = np.broadcast_to(np.arange(B)[:, None, None], src.shape)
    ni = np.broadcast_to(np.arange(N)[None, None, :], src.shape)
    np.add.at(dh, (bi, src, ni), dp)
    return _restore(dh, ndim)


@dataclass
class RecurrentLayer:
    """Simple (``h = f(U h + V x)``) or LSTM recurrent layer.

    For ``kind="lstm"``, ``U`` and ``V`` stack the four gate matrices in the
    order input, forget, cell, output (shapes ``(4N, N)`` and ``(4N, D)``)
    and ``b`` holds the input, forget and output gate biases ``(3N,)``; the
    cell candidate has no bias.
    """

    U: np.ndarray
    V: np.ndarray
    b: np.ndarray | None = None
    kind: str = "simple"
    activation: str = "relu"
    gate_activation: str = "hard_sigmoid"
    cell_activation: str = "tanh"

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        _check(self.kind in ("simple", "lstm"), f"unknown recurrent kind {self.kind!r}")
        k = 4 if self.kind == "lstm" else 1
        N = self.U.shape[1]
        _check(self.U.shape == (k * N, N), f"U must be ({k * N}, {N}), got {self.U.shape}")
        _check(self.V.ndim == 2 and self.V.shape[0] == k * N, "V rows must match U")
        if self.kind == "lstm":
            self.b = (np.zeros(3 * N) if self.b is None
                      else np.asarray(self.b, dtype=np.float64).reshape(-1))
            _check(self.b.shape == (3 * N,), "LSTM bias must have shape (3N,)")

    @property
    def hidden_size(self) -> int:
        return self.U.shape[1]

    @property
    def input_size(self) -> int:
        return self.V.shape[1]

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        k = LSTM_GATES.index(name)
        N = self.hidden_size
        return self.U[k * N:(k + 1) * N], self.V[k * N:(k + 1) * N]


def _check_step(layer, h_prev, x_t):
    _check(h_prev.shape[-1] == layer.hidden_size, "h_prev size != hidden size")
    _check(x_t.shape[-1] == layer.input_size, "x_t size != input size")


def rnn_step(layer: RecurrentLayer, h_prev, x_t):
    h_prev = np.asarray(h_prev, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_step(layer, h_prev, x_t)
    return get_activation(layer.activation)(h_prev @ layer.U.T + x_t @ layer.V.T)


def _lstm_pre(layer, h_prev, x_t):
    N = layer.hidden_size
    z = h_prev @ layer.U.T + x_t @ layer.V.T
    z[..., :2 * N] += layer.b[:2 * N]
    z[..., 3 * N:] += layer.b[2 * N:]
    return z


def lstm_step(layer: RecurrentLayer, h_prev, c_prev, x_t):
    """One memory-block update; returns ``(h_t, c_t)``."""
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    _check_step(layer, h_prev, x_t)
    h, c, _ = _lstm_cell(layer, h_prev, c_prev, x_t)
    return h, c


def _lstm_cell(layer, h_prev, c_prev, x_t):
    N = layer.hidden_size
    gate = get_activation(layer.gate_activation)
    cell = get_activation(layer.cell_activation)
    z = _lstm_pre(layer, h_prev, x_t)
    i, f, o = gate(z[..., :N]), gate(z[..., N:2 * N]), gate(z[..., 3 * N:])
    g = cell(z[..., 2 * N:3 * N])
    c = i * g + f * c_prev
    h = o * cell(c)
    return h, c, (z, i, f, g, o)


def recurrent_forward(layer: RecurrentLayer, X):
    """Run over ``(B, T, D)`` from a zero state; returns ``(H, cache)``."""
    X, squeeze = _as_batch_seq(X)
    B, T, D = X.shape
    _check(D == layer.input_size, f"input dim {D} != layer input size {layer.input_size}")
    N = layer.hidden_size
    H = np.zeros((B, T, N))
    h = np.zeros((B, N))
    if layer.kind == "simple":
        act = get_activation(layer.activation)
        Z = np.zeros((B, T, N))
        XV = X @ layer.V.T
        for t in range(T):
            Z[:, t] = h @ layer.U.T + XV[:, t]
            h = act(Z[:, t])
            H[:, t] = h
        cache = (X, Z, H, squeeze)
    else:
        c = np.zeros((B, N))
        C = np.zeros((B, T, N))
        steps = []
        for t in range(T):
            h, c, parts = _lstm_cell(layer, h, c, X[:, t])
            H[:, t], C[:, t] = h, c
            steps.append(parts)
        cache = (X, H, C, steps, squeeze)
    return (H[0] if squeeze else H), cache


def recurrent_backward(layer: RecurrentLayer, cache, dH):
    """Full backpropagation through time. Returns ``(dX, grads)``.

    ``grads`` maps ``"U"``, ``"V"`` (and ``"b"`` for LSTM) to arrays.
    """
    dH = np.asarray(dH, dtype=np.float64)
    if cache[-1]:
        dH = dH[None]
    N = layer.hidden_size
    dU = np.zeros_like(layer.U)
    dV = np.zeros_like(layer.V)
    if layer.kind == "simple":
        X, Z, H, _ = cache
        B, T, _ = X.shape
        grad = get_activation(layer.activation).grad
        dX = np.zeros_like(X)
        dh_next = np.zeros((B, N))
        for t in reversed(range(T)):
            dz = (dH[:, t] + dh_next) * grad(Z[:, t])
            h_prev = H[:, t - 1] if t else np.zeros((B, N))
            dU += dz.T @ h_prev
            dV += dz.T @ X[:, t]
            dX[:, t] = dz @ layer.V
            dh_next = dz @ layer.U
        grads = {"U": dU, "V": dV}
    else:
        X, H, C, steps, _ = cache
        B, T, _ = X.shape
        gate_grad = get_activation(layer.gate_activation).grad
        cell = get_activation(layer.cell_activation)
        db = np.zeros_like(layer.b)
        dX = np.zeros_like(X)
        dh_next = np.zeros((B, N))
        dc_next = np.zeros((B, N))
        for t in reversed(range(T)):
            z, i, f, g, o = steps[t]
            c = C[:, t]
            c_prev = C[:, t - 1] if t else np.zeros((B, N))
            h_prev = H[:, t - 1] if t else np.zeros((B, N))
            dh = dH[:, t] + dh_next
            tc = cell(c)
            dc = dc_next + dh * o * cell.grad(c)
            dz = np.empty((B, 4 * N))
            dz[:, :N] = dc * g * gate_grad(z[:, :N])
            dz[:, N:2 * N] = dc * c_prev * gate_grad(z[:, N:2 * N])
            dz[:, 2 * N:3 * N] = dc * i * cell.grad(z[:, 2 * N:3 * N])
            dz[:, 3 * N:] = dh * tc * gate_grad(z[:, 3 * N:])
            dU += dz.T @ h_prev
            dV += dz.T @ X[:, t]
            db[:2 * N] += dz[:, :2 * N].sum(axis=0)
            db[2 * N:] += dz[:, 3 * N:].sum(axis=0)
            dX[:, t] = dz @ layer.V
            dh_next = dz @ layer.U
            dc_next = dc * f
        grads = {"U": dU, "V": dV, "b": db}
    return (dX[0] if cache[-1] else dX), grads


def mean_pool_time(H):
    """Arithmetic mean over the time axis of ``(T, N)`` or ``(B, T, N)``."""
    H = np.asarray(H, dtype=np.float64)
    if H.shape[-2] == 0:
        raise ValueError("cannot mean-pool an empty sequence")
    return H.mean(axis=-2)


def mean_pool_time_backward(H_shape, dm):
    T = H_shape[-2]
    dm = np.asarray(dm, dtype=np.float64)
    return np.broadcast_to(np.expand_dims(dm, -2) / T, H_shape).copy()


@dataclass
class OutputHead:
    """Bernoulli output ``sigmoid(phi . w + b)``."""

    w: np.ndarray
    b: float = 0.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        self.b = float(self.b)


def output_logit(head: OutputHead, phi):
    phi = np.asarray(phi, dtype=np.float64)
    _check(phi.shape[-1] == head.w.shape[0],
           f"representation size {phi.shape[-1]} != head size {head.w.shape[0]}")
    return phi @ head.w + head.b


def output_predict(head: OutputHead, phi):
    return sigmoid(output_logit(head, phi))


def output_backward(head: OutputHead, phi, dlogit):
    """Returns ``(dphi, dw, db)`` for upstream gradient w.r.t. the logit."""
    phi = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    dlogit = np.atleast_1d(np.asarray(dlogit, dtype=np.float64))
    return np.outer(dlogit, head.w), phi.T @ dlogit, float(dlogit.sum())


def cross_entropy(y_hat, y):
    """Summed binary cross-entropy and its gradient w.r.t. ``y_hat``.

    Probabilities are clamped to ``[1e-12, 1 - 1e-12]``; the gradient is zero
    where the clamp is active.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = float(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum())
    inside = (y_hat >= PROB_CLAMP) & (y_hat <= 1.0 - PROB_CLAMP)
    d = np.where(inside, -y / p + (1.0 - y) / (1.0 - p), 0.0)
    return loss, d


def cross_entropy_from_logits(logits, y):
    """Clamped summed cross-entropy and its gradient w.r.t. the logits (``p - y``)."""
    p = sigmoid(logits)
    loss, _ = cross_entropy(p, y)
    return loss, p - np.asarray(y, dtype=np.float64)


def dropout_forward(x, rate: float, rng=None, training: bool = True):
    """Inverted dropout. Returns ``(y, mask)``; ``mask`` is None when inactive."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep / (1.0 - rate)
    return x * mask, mask


def dropout_backward(mask, dy):
    return dy if mask is None else dy * mask
