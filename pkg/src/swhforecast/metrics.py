"""Forecast error metrics: RMSE, MAE, SMAPE, R^2 and correlation."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} truths")
    if pred.size == 0:
        raise ValueError("metrics need at least one sample")
    return pred, truth


def _truth_ss(truth):
    ss = np.sum((truth - truth.mean()) ** 2)
    if ss == 0:
        raise ValueError("truth has zero variance")
    return ss


def rmse(pred, truth):
    p, t = _pair(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mae(pred, truth):
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def smape(pred, truth):
    """Symmetric MAPE in percent, range [0, 200]."""
    p, t = _pair(pred, truth)
    denom = (np.abs(p) + np.abs(t)) / 2.0
    bad = np.flatnonzero(denom == 0)
    if len(bad):
        raise ValueError(f"SMAPE undefined where |pred| + |truth| == 0 at indices {bad.tolist()}")
    return float(100.0 * np.mean(np.abs(p - t) / denom))


def r2(pred, truth):
    p, t = _pair(pred, truth)
    return float(1.0 - np.sum((t - p) ** 2) / _truth_ss(t))


def cc(pred, truth):
    """Correlation with both series centred on the mean of ``truth``."""
    p, t = _pair(pred, truth)
    ybar = t.mean()
    num = np.sum((p - ybar) * (t - ybar))
    den = np.sqrt(np.sum((p - ybar) ** 2) * _truth_ss(t))
    return float(num / den) if den > 0 else 0.0


def cc_pearson(pred, truth):
    """Standard Pearson correlation (each series centred on its own mean)."""
    p, t = _pair(pred, truth)
    _truth_ss(t)
    pc, tc = p - p.mean(), t - t.mean()
    den = np.sqrt(np.sum(pc**2) * np.sum(tc**2))
    return float(np.sum(pc * tc) / den) if den > 0 else 0.0


@dataclass
class MetricsBlock:
    rmse: float
    mae: float
    smape: float
    r2: float
    cc: float
    cc_pearson: float
    n: int

    def to_json(self):
        return dataclasses.asdict(self)


METRIC_NAMES = ("rmse", "mae", "smape", "r2", "cc")


def evaluate(pred, truth):
    p, t = _pair(pred, truth)
    return MetricsBlock(rmse(p, t), mae(p, t), smape(p, t), r2(p, t), cc(p, t), cc_pearson(p, t), int(p.size))


def write_metrics_csv(path, blocks):
    """Flat ``label,metric,value`` rows for a mapping of label -> MetricsBlock."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "metric", "value"])
        for label, block in blocks.items():
            for name, value in block.to_json().items():
                w.writerow([label, name, repr(value)])
