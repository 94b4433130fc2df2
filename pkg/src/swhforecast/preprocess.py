"""Gap filling, periodic angle encoding and min-max scaling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ndbc import FEATURES, TimeSeriesTable

DEFAULT_ANGLE_FEATURES = ("WDIR", "MWD")
PAPER_ANGLE_FEATURES = ("WDIR", "MWD", "ATMP", "WTMP", "DEWP")


@dataclass
class DenseTable:
    """Timestamps plus an ordered mapping of gap-free real columns."""

    timestamps: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        n = len(self.timestamps)
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=float)
            if col.shape != (n,):
                raise ValueError(f"column {name} has shape {col.shape}, expected ({n},)")
            if np.isnan(col).any():
                raise ValueError(f"column {name} contains missing values")
            self.columns[name] = col

    def __len__(self):
        return len(self.timestamps)

    @property
    def names(self):
        return list(self.columns)

    def select(self, mask):
        return DenseTable(self.timestamps[mask], {k: v[mask] for k, v in self.columns.items()})


# CleanTable is a DenseTable whose columns are all scaled.
CleanTable = DenseTable


def hours_since(timestamps, origin=None):
    timestamps = np.asarray(timestamps, dtype="datetime64[s]")
    if origin is None:
        origin = timestamps[0] if len(timestamps) else np.datetime64(0, "s")
    return (timestamps - origin).astype(np.int64) / 3600.0


def interpolate_missing(column, positions, name="column"):
    """Fill NaNs by distance-weighted linear interpolation between the
    nearest valid neighbours; leading/trailing gaps take the nearest valid value.
    """
    column = np.asarray(column, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if column.shape != positions.shape:
        raise ValueError(f"{name}: values and positions differ in length")
    valid = ~np.isnan(column)
    if not valid.any():
        raise ValueError(f"feature {name} has no valid values to interpolate from")
    out = column.copy()
    missing = np.flatnonzero(~valid)
    if len(missing) == 0:
        return out
    vidx = np.flatnonzero(valid)
    # index into vidx of the next valid point for each missing one
    nxt = np.searchsorted(vidx, missing)
    lead = nxt == 0
    trail = nxt == len(vidx)
    out[missing[lead]] = column[vidx[0]]
    out[missing[trail]] = column[vidx[-1]]
    inner = ~(lead | trail)
    m = missing[inner]
    i_prev = vidx[nxt[inner] - 1]
    i_next = vidx[nxt[inner]]
    t_prev, t_next, t_miss = positions[i_prev], positions[i_next], positions[m]
    span = t_next - t_prev
    out[m] = ((t_next - t_miss) / span) * column[i_prev] + ((t_miss - t_prev) / span) * column[i_next]
    return out


@dataclass(frozen=True)
class AngleEncoding:
    x_new: float
    x_sign: int


def encode_angle(x, T=360.0):
    if T <= 0:
        raise ValueError("period must be positive")
    if not math.isfinite(x):
        raise ValueError(f"angle must be finite, got {x}")
    x = x % T
    x_new = -0.5 * math.cos(2.0 * math.pi * x / T) + 0.5
    return AngleEncoding(x_new, 1 if x > 0.5 * T else 0)


def encode_angles(x, T=360.0):
    """Vectorised :func:`encode_angle`; returns ``(x_new, x_sign)`` arrays."""
    if T <= 0:
        raise ValueError("period must be positive")
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise ValueError("angles must be finite")
    x = np.mod(x, T)
    return -0.5 * np.cos(2.0 * np.pi * x / T) + 0.5, (x > 0.5 * T).astype(float)


def decode_angle(enc, T=360.0):
    """Invert :func:`encode_angle`. ``x_sign`` picks the half-period."""
    if not 0.0 <= enc.x_new <= 1.0:
        raise ValueError(f"x_new must lie in [0, 1], got {enc.x_new}")
    theta = math.acos(1.0 - 2.0 * enc.x_new)
    if enc.x_sign:
        theta = 2.0 * math.pi - theta
    return (theta * T / (2.0 * math.pi)) % T


@dataclass
class ScalerParams:
    x_min: dict[str, float]
    x_max: dict[str, float]

    def to_json(self):
        return {"x_min": self.x_min, "x_max": self.x_max}

    @classmethod
    def from_json(cls, doc):
        return cls(dict(doc["x_min"]), dict(doc["x_max"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def train_mask(timestamps, train_range):
    """Boolean mask of rows with ``start <= ts < end``; ``None`` bounds are open."""
    timestamps = np.asarray(timestamps, dtype="datetime64[s]")
    mask = np.ones(len(timestamps), dtype=bool)
    if train_range is None:
        return mask
    start, end = train_range
    if start is not None:
        mask &= timestamps >= np.datetime64(start, "s")
    if end is not None:
        mask &= timestamps < np.datetime64(end, "s")
    return mask


def fit_scaler(table, train_range=None, allow_constant=False):
    """Per-column min/max over the rows inside ``train_range``.

    Constant columns raise unless ``allow_constant``; such columns then scale to 0.
    """
    mask = train_mask(table.timestamps, train_range)
    if not mask.any():
        raise ValueError("training range selects no rows")
    x_min, x_max = {}, {}
    for name, col in table.columns.items():
        lo, hi = float(np.min(col[mask])), float(np.max(col[mask]))
        if hi == lo and not allow_constant:
            raise ValueError(f"feature {name} is constant over the training range ({lo})")
        x_min[name], x_max[name] = lo, hi
    return ScalerParams(x_min, x_max)


def scale_values(values, feature, params):
    if feature not in params.x_min:
        raise KeyError(f"unknown feature {feature!r}")
    lo, hi = params.x_min[feature], params.x_max[feature]
    values = np.asarray(values, dtype=float)
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def apply_scaler(table, params):
    """Min-max scale every column. Values outside the fitted range are not clipped."""
    return DenseTable(
        table.timestamps, {name: scale_values(col, name, params) for name, col in table.columns.items()}
    )


def invert_scaler(value, feature, params):
    if feature not in params.x_min:
        raise KeyError(f"unknown feature {feature!r}")
    lo, hi = params.x_min[feature], params.x_max[feature]
    out = np.asarray(value, dtype=float) * (hi - lo) + lo
    return float(out) if out.ndim == 0 else out


def expanded_feature_names(angle_features=DEFAULT_ANGLE_FEATURES):
    names = []
    for f in FEATURES:
        if f in angle_features:
            names += [f"{f}_new", f"{f}_sign"]
        else:
            names.append(f)
    return names


def fill_and_encode(table: TimeSeriesTable, angle_features=DEFAULT_ANGLE_FEATURES, period=360.0):
    """Interpolate every feature, then replace angular ones by (new, sign) pairs."""
    unknown = set(angle_features) - set(FEATURES)
    if unknown:
        raise ValueError(f"unknown angle features: {sorted(unknown)}")
    pos = hours_since(table.timestamps)
    columns = {}
    for f in FEATURES:
        filled = interpolate_missing(table.columns[f], pos, name=f)
        if f in angle_features:
            columns[f"{f}_new"], columns[f"{f}_sign"] = encode_angles(filled, period)
        else:
            columns[f] = filled
    return DenseTable(table.timestamps, columns)


def preprocess(table, train_range=None, angle_features=DEFAULT_ANGLE_FEATURES, paper_faithful=False):
    """Fill, encode and scale a raw table.

    The scaler is fitted on ``train_range`` unless ``paper_faithful`` is set,
    in which case it sees the whole series. Returns ``(clean, dense, scaler)``.
    """
    dense = fill_and_encode(table, angle_features)
    scaler = fit_scaler(dense, None if paper_faithful else train_range)
    return apply_scaler(dense, scaler), dense, scaler
