"""Single-layer LSTM regressor trained by backpropagation through time.

The cell is the standard formulation: input/forget/output gates through the
logistic sigmoid, candidate through tanh,

    c_t = f_t * c_{t-1} + i_t * g_t,      h_t = o_t * tanh(c_t),

with zero initial state and a linear head on the final hidden state. Training
is plain per-sample gradient descent on squared error, in fixed sample order,
with global gradient-norm clipping — the simplest scheme that converges on
the synthetic suite while staying bit-deterministic for a given seed.

The four gates are stored stacked along the first axis (order: input,
forget, output, candidate) so one matrix product per step evaluates them all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import NumericError, ShapeError, ValidationError
from .rng import SplitMix64
from .validation import check_vector, check_windows

GATE_ORDER = ("input", "forget", "output", "candidate")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # 0.5 * (1 + tanh(x/2)) is the logistic function, stable for large |x|.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmParams:
    """All trainable parameters; gate rows stacked as [4*hidden, ...]."""

    w_in: np.ndarray   # [4H x n_features]
    w_rec: np.ndarray  # [4H x H]
    bias: np.ndarray   # [4H]
    w_out: np.ndarray  # [H]
    b_out: float
    version: int = 0   # bumped on every update; detects stale caches

    @property
    def hidden_size(self) -> int:
        return self.w_rec.shape[1]

    @property
    def n_features(self) -> int:
        return self.w_in.shape[1]

    def gate(self, array: np.ndarray, name: str) -> np.ndarray:
        """Slice one gate's rows out of a stacked array."""
        g = GATE_ORDER.index(name)
        h = self.hidden_size
        return array[g * h:(g + 1) * h]


@dataclass
class LstmGrads:
    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray
    w_out: np.ndarray
    b_out: float

    def global_norm(self) -> float:
        try:
            total = (
                float(np.vdot(self.w_in, self.w_in))
                + float(np.vdot(self.w_rec, self.w_rec))
                + float(np.vdot(self.bias, self.bias))
                + float(np.vdot(self.w_out, self.w_out))
                + self.b_out**2
            )
        except OverflowError:
            return math.inf
        return math.sqrt(total) if total >= 0.0 else math.nan

    def scale(self, factor: float) -> None:
        self.w_in *= factor
        self.w_rec *= factor
        self.bias *= factor
        self.w_out *= factor
        self.b_out *= factor


@dataclass
class LstmCache:
    """Per-step activations from one forward pass, consumed by backward."""

    x: np.ndarray        # [T x F]
    h_prev: np.ndarray   # [T x H]
    c_prev: np.ndarray   # [T x H]
    gates: np.ndarray    # [T x 4H], sigmoid/tanh already applied
    c: np.ndarray        # [T x H]
    tanh_c: np.ndarray   # [T x H]
    h_last: np.ndarray   # [H]
    prediction: float
    params_version: int


def init_params(n_features: int, hidden_size: int, seed: int) -> LstmParams:
    """Uniform initialization in [-k, k], k = 1/sqrt(hidden_size).

    Draw order is fixed: for each gate in (input, forget, output, candidate)
    the input weights row-major, then the recurrent weights, then the bias;
    finally the output weights and output bias.
    """
    if hidden_size < 1 or n_features < 1:
        raise ValidationError("hidden_size and n_features must be >= 1")
    rng = SplitMix64(seed)
    k = 1.0 / math.sqrt(hidden_size)
    h, f = hidden_size, n_features
    w_in = np.empty((4 * h, f))
    w_rec = np.empty((4 * h, h))
    bias = np.empty(4 * h)
    for g in range(len(GATE_ORDER)):
        rows = slice(g * h, (g + 1) * h)
        w_in[rows] = [[rng.uniform(-k, k) for _ in range(f)] for _ in range(h)]
        w_rec[rows] = [[rng.uniform(-k, k) for _ in range(h)] for _ in range(h)]
        bias[rows] = [rng.uniform(-k, k) for _ in range(h)]
    w_out = np.array([rng.uniform(-k, k) for _ in range(h)])
    b_out = rng.uniform(-k, k)
    return LstmParams(w_in=w_in, w_rec=w_rec, bias=bias, w_out=w_out, b_out=b_out)


def forward(params: LstmParams, window: np.ndarray) -> tuple[float, LstmCache]:
    """Run one window [T x n_features] through the cell; returns prediction and cache."""
    x = np.asarray(window, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.n_features:
        raise ShapeError(
            f"window must be [T x {params.n_features}], got shape {x.shape}"
        )
    t_len, h = x.shape[0], params.hidden_size
    if t_len < 1:
        raise ShapeError("window must contain at least one step")
    gates = np.empty((t_len, 4 * h))
    cs = np.empty((t_len, h))
    tanh_cs = np.empty((t_len, h))
    h_prevs = np.empty((t_len, h))
    c_prevs = np.empty((t_len, h))
    x_proj = x @ params.w_in.T + params.bias  # input contribution, all steps at once
    h_state = np.zeros(h)
    c_state = np.zeros(h)
    for t in range(t_len):
        h_prevs[t] = h_state
        c_prevs[t] = c_state
        z = x_proj[t] + params.w_rec @ h_state
        ifo = _sigmoid(z[:3 * h])
        i = ifo[0 * h:1 * h]
        f = ifo[1 * h:2 * h]
        o = ifo[2 * h:3 * h]
        g = np.tanh(z[3 * h:])
        c_state = f * c_state + i * g
        tanh_c = np.tanh(c_state)
        h_state = o * tanh_c
        gates[t, :3 * h] = ifo
        gates[t, 3 * h:] = g
        cs[t] = c_state
        tanh_cs[t] = tanh_c
    prediction = float(params.w_out @ h_state + params.b_out)
    if not math.isfinite(prediction) or not np.all(np.isfinite(h_state)):
        raise NumericError("non-finite activation in forward pass")
    return prediction, LstmCache(
        x=x, h_prev=h_prevs, c_prev=c_prevs, gates=gates, c=cs, tanh_c=tanh_cs,
        h_last=h_state, prediction=prediction, params_version=params.version,
    )


def backward(params: LstmParams, target: float, cache: LstmCache) -> LstmGrads:
    """Gradients of (prediction - target)**2 w.r.t. every parameter."""
    if cache.params_version != params.version:
        raise ValidationError("stale cache: parameters changed since the forward pass")
    t_len, h = cache.x.shape[0], params.hidden_size
    dpred = 2.0 * (cache.prediction - target)
    d_gates = np.empty((t_len, 4 * h))
    w_rec_t = params.w_rec.T
    dh = dpred * params.w_out
    dc = np.zeros(h)
    for t in range(t_len - 1, -1, -1):
        row = cache.gates[t]
        i = row[0 * h:1 * h]
        f = row[1 * h:2 * h]
        o = row[2 * h:3 * h]
        g = row[3 * h:4 * h]
        tanh_c = cache.tanh_c[t]
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        out = d_gates[t]
        out[0 * h:1 * h] = (dc * g) * i * (1.0 - i)
        out[1 * h:2 * h] = (dc * cache.c_prev[t]) * f * (1.0 - f)
        out[2 * h:3 * h] = (dh * tanh_c) * o * (1.0 - o)
        out[3 * h:4 * h] = (dc * i) * (1.0 - g * g)
        dh = w_rec_t @ out
        dc = dc * f
    return LstmGrads(
        w_in=d_gates.T @ cache.x,
        w_rec=d_gates.T @ cache.h_prev,
        bias=d_gates.sum(axis=0),
        w_out=dpred * cache.h_last,
        b_out=dpred,
    )


def _batched_predict(params: LstmParams, windows: np.ndarray) -> np.ndarray:
    """Forward pass vectorized over windows; used for prediction and loss curves."""
    n, t_len, _ = windows.shape
    h = params.hidden_size
    h_state = np.zeros((n, h))
    c_state = np.zeros((n, h))
    for t in range(t_len):
        z = windows[:, t, :] @ params.w_in.T + h_state @ params.w_rec.T + params.bias
        i = _sigmoid(z[:, 0 * h:1 * h])
        f = _sigmoid(z[:, 1 * h:2 * h])
        o = _sigmoid(z[:, 2 * h:3 * h])
        g = np.tanh(z[:, 3 * h:4 * h])
        c_state = f * c_state + i * g
        h_state = o * np.tanh(c_state)
    out = h_state @ params.w_out + params.b_out
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite activation in forward pass")
    return out


class LstmRegressor(RegressorMixin, BaseEstimator):
    """Next-value regressor over feature windows.

    Expects already-normalized inputs of shape [n x window x features] and
    scalar targets. Deterministic: the seed fully determines the fitted
    parameters for a given dataset and configuration.
    """

    def __init__(self, hidden_size=32, epochs=100, learning_rate=0.01,
                 grad_clip_norm=5.0, seed=0):
        self.hidden_size = hidden_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.grad_clip_norm = grad_clip_norm
        self.seed = seed

    def _check_config(self):
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if not self.grad_clip_norm > 0:
            raise ValidationError("grad_clip_norm must be > 0")
        if self.hidden_size < 1:
            raise ValidationError("hidden_size must be >= 1")

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on windows X, recording (train_mse, val_mse) after each epoch."""
        self._check_config()
        X = check_windows(X, "X")
        y = check_vector(y, "y", length=X.shape[0])
        if X.shape[0] == 0:
            raise ValidationError("training set is empty")
        if X_val is not None:
            X_val = check_windows(X_val, "X_val", n_features=X.shape[2])
            y_val = check_vector(y_val, "y_val", length=X_val.shape[0])
        self.n_features_in_ = X.shape[2]
        self.window_len_ = X.shape[1]
        params = init_params(self.n_features_in_, self.hidden_size, self.seed)
        clip = float(self.grad_clip_norm)
        lr = float(self.learning_rate)
        history = []
        for epoch in range(1, self.epochs + 1):
            for idx in range(X.shape[0]):
                # overflow surfaces as a NumericError below, not as warnings
                with np.errstate(over="ignore", invalid="ignore"):
                    pred, cache = forward(params, X[idx])
                    grads = backward(params, float(y[idx]), cache)
                norm = grads.global_norm()
                if not math.isfinite(norm):
                    raise NumericError(f"training diverged: non-finite gradient at epoch {epoch}")
                if norm > clip:
                    grads.scale(clip / norm)
                params.w_in -= lr * grads.w_in
                params.w_rec -= lr * grads.w_rec
                params.bias -= lr * grads.bias
                params.w_out -= lr * grads.w_out
                params.b_out -= lr * grads.b_out
                params.version += 1
            train_mse = float(np.mean((_batched_predict(params, X) - y) ** 2))
            if not math.isfinite(train_mse):
                raise NumericError(f"training diverged: non-finite loss at epoch {epoch}")
            if X_val is not None and X_val.shape[0] > 0:
                val_mse = float(np.mean((_batched_predict(params, X_val) - y_val) ** 2))
            else:
                val_mse = math.nan
            history.append((train_mse, val_mse))
        self.params_ = params
        self.loss_history_ = history
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise ValidationError("model is not fitted")
        X = check_windows(X, "X", n_features=self.n_features_in_)
        return _batched_predict(self.params_, X)
