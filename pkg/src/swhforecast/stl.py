"""Seasonal-trend decomposition by LOESS.

All smoothing routines operate on the last axis and accept a leading batch
dimension, so many series (or many cycle-subseries) are smoothed in a single
vectorised call.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StlConfig:
    period: int = 24
    seasonal_span: int = 35
    trend_span: int | None = None
    lowpass_span: int | None = None
    inner_iters: int = 2
    outer_iters: int = 1
    loess_degree: int = 1
    tol: float | None = None  # optional early stop on relative change of T and S

    def __post_init__(self):
        if self.period < 2:
            raise ValueError("period must be >= 2")
        if self.trend_span is None:
            object.__setattr__(self, "trend_span", default_trend_span(self.period, self.seasonal_span))
        if self.lowpass_span is None:
            object.__setattr__(self, "lowpass_span", _next_odd(self.period))
        for name in ("seasonal_span", "trend_span", "lowpass_span"):
            _check_span(getattr(self, name), name)
        if self.trend_span <= self.period:
            raise ValueError(f"trend_span ({self.trend_span}) must exceed period ({self.period})")
        if self.inner_iters < 1 or self.outer_iters < 0:
            raise ValueError("inner_iters must be >= 1 and outer_iters >= 0")
        if self.loess_degree not in (0, 1):
            raise ValueError("loess_degree must be 0 or 1")


def _next_odd(v):
    v = int(math.ceil(v))
    return v if v % 2 else v + 1


def default_trend_span(period, seasonal_span):
    return _next_odd(1.5 * period / (1.0 - 1.5 / seasonal_span))


def _check_span(span, name="span"):
    if span < 3 or span % 2 == 0:
        raise ValueError(f"{name} must be odd and >= 3, got {span}")


@dataclass
class StlDecomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    timestamps: np.ndarray | None = None

    def reconstruct(self):
        return self.trend + self.seasonal + self.residual

    def to_csv(self, path, timestamps, original):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "original", "trend", "seasonal", "residual"])
            for row in zip(timestamps, original, self.trend, self.seasonal, self.residual):
                w.writerow([str(np.datetime64(row[0], "s")) + "Z", *(repr(float(v)) for v in row[1:])])


def _neighbourhoods(x, xs, q):
    """Left index of the ``q`` nearest neighbours of each ``xs`` and the
    tricube bandwidth. ``x`` must be sorted."""
    n = len(x)
    qq = min(q, n)
    lo = np.clip(np.searchsorted(x, xs) - qq // 2, 0, n - qq)
    # slide windows until they hold the qq nearest points
    while True:
        left = (lo > 0) & (xs - x[np.maximum(lo - 1, 0)] < x[lo + qq - 1] - xs)
        right = (lo + qq < n) & (x[np.minimum(lo + qq, n - 1)] - xs < xs - x[lo])
        if not (left.any() or right.any()):
            break
        lo = lo - left + right
    h = np.maximum(xs - x[lo], x[lo + qq - 1] - xs)
    if q > n:
        h = h + (q - n) // 2
    return lo, qq, h


def loess_smooth(x, y, span, degree=1, robustness_weights=None, at=None):
    """Local weighted regression of ``y`` on ``x``.

    Parameters
    ----------
    x : (n,) sorted positions shared by every row of ``y``.
    y : (..., n) values.
    span : odd number of nearest neighbours in each local fit. A span wider
        than the data uses every point with an enlarged bandwidth.
    degree : 0 (local mean) or 1 (local line).
    robustness_weights : optional (..., n) weights in [0, 1].
    at : optional evaluation positions; defaults to ``x``.

    Returns
    -------
    (..., len(at)) smoothed values.
    """
    _check_span(span)
    if degree not in (0, 1):
        raise ValueError("degree must be 0 or 1")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if y.shape[-1] != n:
        raise ValueError("x and y lengths differ")
    xs = x if at is None else np.asarray(at, dtype=float)
    if robustness_weights is not None:
        robustness_weights = np.asarray(robustness_weights, dtype=float)
        if robustness_weights.shape != y.shape:
            raise ValueError("robustness weights must match y")
        if robustness_weights.min() < 0 or robustness_weights.max() > 1:
            raise ValueError("robustness weights must lie in [0, 1]")

    lo, qq, h = _neighbourhoods(x, xs, span)
    idx = lo[:, None] + np.arange(qq)
    X = x[idx]
    r = np.abs(X - xs[:, None])
    hh = h[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(r <= 0.001 * hh, 1.0, (1.0 - (r / hh) ** 3) ** 3)
    w = np.where(r <= 0.999 * hh, w, 0.0)
    if robustness_weights is not None and len(xs) * n <= _DENSE_LIMIT:
        return _weighted_loess_dense(x, y, xs, idx, X, w, degree, robustness_weights)
    if robustness_weights is not None:
        w = w * robustness_weights[..., idx]
    total = w.sum(axis=-1, keepdims=True)
    ok = total[..., 0] > 0
    wn = w / np.where(total > 0, total, 1.0)
    if degree == 1:
        xbar = (wn * X).sum(axis=-1, keepdims=True)
        c = (wn * (X - xbar) ** 2).sum(axis=-1, keepdims=True)
        rng = x[-1] - x[0]
        use_slope = np.sqrt(c) > 0.001 * rng
        b = np.where(use_slope, (xs[:, None] - xbar) / np.where(use_slope, c, 1.0), 0.0)
        wn = wn * (b * (X - xbar) + 1.0)
    if robustness_weights is None:
        # the weights are shared by every row: apply them as one matrix product
        M = np.zeros((len(xs), n))
        M[np.arange(len(xs))[:, None], idx] = wn
        out = y @ M.T
    else:
        out = (wn * y[..., idx]).sum(axis=-1)
    if not ok.all():
        # every neighbour has zero weight: keep the nearest raw value
        nearest = np.clip(np.searchsorted(x, xs), 0, n - 1)
        out = np.where(ok, out, y[..., nearest])
    return out


# largest (evaluation points x data points) kernel held as a dense matrix
_DENSE_LIMIT = 1 << 20


def _weighted_loess_dense(x, y, xs, idx, X, w, degree, rw):
    """Robustness-weighted LOESS through kernel matrices shared by all rows.

    The local fit at ``xs[i]`` only needs weighted moments of the offsets
    ``x - xs[i]`` and of ``y``; each is a matrix product with a fixed kernel.
    """
    m, n = len(xs), len(x)
    rows = np.arange(m)[:, None]
    K = np.zeros((m, n))
    K[rows, idx] = w
    total = rw @ K.T
    ok = total > 0
    safe = np.where(ok, total, 1.0)
    ry = rw * y
    out = (ry @ K.T) / safe
    if degree == 1:
        U = np.zeros((m, n))
        U[rows, idx] = X - xs[:, None]
        KU = K * U
        m1 = (rw @ KU.T) / safe
        var = (rw @ (KU * U).T) / safe - m1**2
        cov = (ry @ KU.T) / safe - m1 * out
        use_slope = np.sqrt(np.maximum(var, 0.0)) > 0.001 * (x[-1] - x[0])
        out = out - np.where(use_slope, m1 * cov / np.where(use_slope, var, 1.0), 0.0)
    if not ok.all():
        nearest = np.clip(np.searchsorted(x, xs), 0, n - 1)
        out = np.where(ok, out, y[..., nearest])
    return out


def robustness_weights(residuals):
    """Bisquare weights from residuals, row-wise over the last axis."""
    r = np.abs(np.asarray(residuals, dtype=float))
    if r.shape[-1] == 0:
        raise ValueError("residuals must be non-empty")
    cmad = 6.0 * np.median(r, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = r / cmad
    u = np.minimum(u, 1.0)
    w = (1.0 - u**2) ** 2
    # zero median: exact zeros keep full weight
    w = np.where(cmad == 0, np.where(r == 0, 1.0, 0.0), w)
    return w


def _moving_average(a, length):
    c = np.cumsum(a, axis=-1)
    c = np.concatenate([np.zeros(a.shape[:-1] + (1,)), c], axis=-1)
    return (c[..., length:] - c[..., :-length]) / length


def _cycle_subseries(D, rw, cfg):
    """Smooth every phase subseries and extend each by one cycle at both ends."""
    B, n = D.shape
    P = cfg.period
    C = np.empty((B, n + 2 * P))
    base, rem = divmod(n, P)
    for phases, k in ((np.arange(rem), base + 1), (np.arange(rem, P), base)):
        if len(phases) == 0:
            continue
        idx = phases[:, None] + P * np.arange(k)  # (g, k)
        sub = D[:, idx].reshape(-1, k)
        sub_w = None if rw is None else rw[:, idx].reshape(-1, k)
        pos = np.arange(1, k + 1, dtype=float)
        sm = loess_smooth(pos, sub, cfg.seasonal_span, cfg.loess_degree, sub_w, at=np.arange(0, k + 2, dtype=float))
        out_idx = phases[:, None] + P * np.arange(k + 2)
        C[:, out_idx] = sm.reshape(B, len(phases), k + 2)
    return C


def _lowpass(C, n, cfg):
    P = cfg.period
    L = _moving_average(_moving_average(_moving_average(C, P), P), 3)
    pos = np.arange(1, n + 1, dtype=float)
    return loess_smooth(pos, L, cfg.lowpass_span, 1)


def stl_batch(Y, cfg):
    """Decompose each row of ``Y`` (shape (B, n)). Returns ``(T, S, R)``."""
    Y = np.asarray(Y, dtype=float)
    B, n = Y.shape
    P = cfg.period
    if n < 2 * P:
        raise ValueError(f"series of length {n} is shorter than two periods ({2 * P})")
    if np.isnan(Y).any():
        raise ValueError("series contains NaN")
    pos = np.arange(1, n + 1, dtype=float)
    T = np.zeros_like(Y)
    S = np.zeros_like(Y)
    rw = None  # unit weights until the first robustness pass
    for outer in range(cfg.outer_iters + 1):
        for _ in range(cfg.inner_iters):
            T_prev, S_prev = T, S
            C = _cycle_subseries(Y - T, rw, cfg)
            S = C[:, P : P + n] - _lowpass(C, n, cfg)
            T = loess_smooth(pos, Y - S, cfg.trend_span, 1, rw)
            if cfg.tol is not None and _converged(T_prev, T, cfg.tol) and _converged(S_prev, S, cfg.tol):
                break
        if outer < cfg.outer_iters:
            rw = robustness_weights(Y - T - S)
    return T, S, Y - T - S


def _converged(old, new, tol):
    spread = new.max(axis=-1) - new.min(axis=-1)
    change = np.abs(new - old).max(axis=-1)
    return bool(np.all(change <= tol * np.where(spread > 0, spread, 1.0)))


def stl_decompose(series, config=None):
    """Additive STL decomposition of a single gap-free series."""
    cfg = config or StlConfig()
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    T, S, _ = stl_batch(y[None, :], cfg)
    T, S = T[0], S[0]
    return StlDecomposition(T, S, y - T - S)


def stl_causal(series, start, config=None, window=None, chunk=256):
    """Decompose ``series[:start]`` in one pass and extend the components over
    ``series[start:]`` causally: each later point takes the last value of a
    decomposition of its trailing ``window`` samples (default 8 periods).
    """
    cfg = config or StlConfig()
    y = np.asarray(series, dtype=float)
    n = len(y)
    window = window or 8 * cfg.period
    if start < window:
        raise ValueError(f"causal extension needs {window} leading samples, have {start}")
    head = stl_decompose(y[:start], cfg)
    trend = np.empty(n)
    seasonal = np.empty(n)
    trend[:start], seasonal[:start] = head.trend, head.seasonal
    if start < n:
        frames = np.lib.stride_tricks.sliding_window_view(y, window)[start - window + 1 :]
        for i in range(0, len(frames), chunk):
            T, S, _ = stl_batch(frames[i : i + chunk], cfg)
            trend[start + i : start + i + len(T)] = T[:, -1]
            seasonal[start + i : start + i + len(T)] = S[:, -1]
    return StlDecomposition(trend, seasonal, y - trend - seasonal)
