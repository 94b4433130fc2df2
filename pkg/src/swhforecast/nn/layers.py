"""Layers for the TCN-LSTM network, written against :mod:`.tensor`.

Sequence tensors are laid out ``(batch, time, channels)``; functions that
take an unbatched ``(time, channels)`` input return an unbatched result.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, _lift, concat, pad_left


def _batched(x):
    x = _lift(x)
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    if x.ndim != 3:
        raise ValueError(f"expected (time, channels) or (batch, time, channels), got {x.shape}")
    return x, False


def causal_conv1d(x, kernel, dilation=1, bias=None):
    """Dilated causal convolution: ``y(t) = sum_i x(t - d*i) @ kernel[i]``.

    ``kernel`` has shape ``(k, C_in, C_out)``. The input is left-padded with
    ``(k-1)*d`` zeros so the output keeps the input length.
    """
    x, squeeze = _batched(x)
    kernel = _lift(kernel)
    if kernel.ndim != 3 or kernel.shape[1] != x.shape[2]:
        raise ValueError(f"kernel shape {kernel.shape} does not match input channels {x.shape[2]}")
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    k = kernel.shape[0]
    T = x.shape[1]
    pad = (k - 1) * dilation
    xp = pad_left(x, pad, axis=1)
    y = None
    for i in range(k):
        start = pad - dilation * i
        term = xp[:, start : start + T, :] @ kernel[i]
        y = term if y is None else y + term
    if bias is not None:
        y = y + bias
    return y.reshape(*y.shape[1:]) if squeeze else y


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, channels):
        return cls(np.zeros(channels), np.ones(channels))


def batch_norm(x, gamma, beta, state, training):
    """Per-channel normalisation over batch and time.

    Training uses batch statistics and updates the running estimates; a
    single-sample batch falls back to running statistics with a warning.
    """
    if training and x.shape[0] == 1:
        warnings.warn("batch norm on a single-sample batch: using running statistics", RuntimeWarning, stacklevel=2)
        training = False
    if training:
        mean = x.mean(axis=(0, 1), keepdims=True)
        centred = x - mean
        var = (centred * centred).mean(axis=(0, 1), keepdims=True)
        n = x.shape[0] * x.shape[1]
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mean.data.reshape(-1)
        unbiased = var.data.reshape(-1) * (n / (n - 1) if n > 1 else 1.0)
        state.running_var = (1 - m) * state.running_var + m * unbiased
        xhat = centred * (var + state.eps) ** -0.5
    else:
        xhat = (x - state.running_mean) * (1.0 / np.sqrt(state.running_var + state.eps))
    return xhat * gamma + beta


def dropout(x, p, rng, training):
    """Inverted dropout; identity at inference or when ``p == 0``."""
    if not training or p == 0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask


@dataclass
class TcnBlockParams:
    conv1: Tensor
    conv1_bias: Tensor
    conv2: Tensor
    conv2_bias: Tensor
    bn1_gamma: Tensor
    bn1_beta: Tensor
    bn2_gamma: Tensor
    bn2_beta: Tensor
    dilation: int
    dropout: float = 0.2
    proj: Tensor | None = None
    proj_bias: Tensor | None = None
    bn1: BatchNormState = field(default=None)
    bn2: BatchNormState = field(default=None)

    def __post_init__(self):
        k, c_in, c_out = self.conv1.shape
        if self.dilation < 1 or k < 1:
            raise ValueError("kernel size and dilation must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if (self.proj is not None) != (c_in != c_out):
            raise ValueError("residual projection required exactly when channel counts differ")
        if self.bn1 is None:
            self.bn1 = BatchNormState.fresh(c_out)
        if self.bn2 is None:
            self.bn2 = BatchNormState.fresh(c_out)


def tcn_block_forward(x, params, training=False, rng=None, canonical_residual=False):
    """Residual block of two dilated causal convolutions.

    Each convolution is followed by batch norm, ReLU and dropout. The
    residual (1x1-projected when channel counts differ) is added after the
    second activation; ``canonical_residual`` applies a final ReLU to the sum
    instead.
    """
    x, squeeze = _batched(x)
    if training and params.dropout > 0 and rng is None:
        raise ValueError("training with dropout needs an rng")
    h = x
    for conv, bias, gamma, beta, bn in (
        (params.conv1, params.conv1_bias, params.bn1_gamma, params.bn1_beta, params.bn1),
        (params.conv2, params.conv2_bias, params.bn2_gamma, params.bn2_beta, params.bn2),
    ):
        h = causal_conv1d(h, conv, params.dilation, bias)
        h = batch_norm(h, gamma, beta, bn, training).relu()
        h = dropout(h, params.dropout, rng, training)
    res = x if params.proj is None else x @ params.proj + params.proj_bias
    y = h + res
    if canonical_residual:
        y = y.relu()
    return y.reshape(*y.shape[1:]) if squeeze else y


@dataclass
class LstmParams:
    W_f: Tensor
    W_i: Tensor
    W_C: Tensor
    W_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_C: Tensor
    b_o: Tensor

    def __post_init__(self):
        shapes = {w.shape for w in (self.W_f, self.W_i, self.W_C, self.W_o)}
        if len(shapes) != 1:
            raise ValueError(f"gate matrices differ in shape: {shapes}")
        H, width = self.W_f.shape
        if width <= H:
            raise ValueError("gate matrices must be [H, H + input_dim]")

    @property
    def hidden(self):
        return self.W_f.shape[0]

    @property
    def input_dim(self):
        return self.W_f.shape[1] - self.W_f.shape[0]


def lstm_forward(x_seq, params, h0=None, c0=None):
    """Run the LSTM recurrence over ``x_seq``.

    Gates per step, in order: forget, input, candidate, cell update, output,
    hidden, each reading the concatenation ``[h_{t-1}, x_t]``.
    Returns ``(h_seq, h_T, c_T)`` where ``h_seq`` is a list of per-step hidden
    states.
    """
    x, squeeze = _batched(x_seq)
    B, T, D = x.shape
    H = params.hidden
    if D != params.input_dim:
        raise ValueError(f"input has {D} features, LSTM expects {params.input_dim}")
    h = _lift(np.zeros((B, H)) if h0 is None else h0)
    c = _lift(np.zeros((B, H)) if c0 is None else c0)
    W = concat([params.W_f, params.W_i, params.W_C, params.W_o], axis=0).T  # (H+D, 4H)
    b = concat([params.b_f, params.b_i, params.b_C, params.b_o], axis=0)
    h_seq = []
    for t in range(T):
        z = concat([h, x[:, t, :]], axis=1) @ W + b
        f = z[:, 0:H].sigmoid()
        i = z[:, H : 2 * H].sigmoid()
        cand = z[:, 2 * H : 3 * H].tanh()
        c = f * c + i * cand
        o = z[:, 3 * H : 4 * H].sigmoid()
        h = o * c.tanh()
        h_seq.append(h)
    if squeeze:
        h_seq = [s.reshape(H) for s in h_seq]
        return h_seq, h.reshape(H), c.reshape(H)
    return h_seq, h, c


def dense(x, weight, bias):
    return _lift(x) @ weight + bias


def mse_loss(pred, target):
    diff = _lift(pred) - _lift(target)
    return (diff * diff).mean()
