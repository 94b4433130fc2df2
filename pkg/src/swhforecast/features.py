"""Feature-matrix assembly, supervised windowing and chronological splits."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensorio
from .preprocess import DenseTable, ScalerParams, apply_scaler, fit_scaler
from .spectral import GlobalSpectralFeatures

log = logging.getLogger(__name__)

# Column groups fed to the network; experiment variants pick subsets.
STL_PARTS = ("trend", "seasonal", "residual")
ALL_PARTS = frozenset({"stl", "raw", "gsf", "domfreq"})
BASELINE_PARTS = frozenset({"stl", "gsf", "domfreq"})


@dataclass
class SpectralFeatures:
    """Global spectral summary plus the per-sample dominant STFT frequency."""

    gsf: GlobalSpectralFeatures
    domfreq: np.ndarray
    timestamps: np.ndarray | None = None


@dataclass
class FeatureMatrix:
    timestamps: np.ndarray
    columns: dict[str, np.ndarray]
    aux: dict[str, np.ndarray] = field(default_factory=dict)  # non-input columns (targets)
    scaler: ScalerParams | None = None

    def __len__(self):
        return len(self.timestamps)

    @property
    def names(self):
        return list(self.columns)

    def array(self):
        return np.column_stack([self.columns[c] for c in self.columns]) if self.columns else np.empty((len(self), 0))

    def select(self, mask):
        return FeatureMatrix(
            self.timestamps[mask],
            {k: v[mask] for k, v in self.columns.items()},
            {k: v[mask] for k, v in self.aux.items()},
            self.scaler,
        )

    def to_csv(self, path):
        """Write the matrix as CSV with a sibling ``.schema.json``."""
        path = Path(path)
        names = self.names + [f"aux:{k}" for k in self.aux]
        data = np.column_stack([*self.columns.values(), *self.aux.values()])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", *names])
            for ts, row in zip(self.timestamps, data):
                w.writerow([str(ts) + "Z", *(repr(float(v)) for v in row)])
        schema = {
            "columns": [{"name": n, "type": "float64"} for n in self.names],
            "aux": list(self.aux),
            "timestamp": "ISO-8601 UTC, hourly",
            "scaler": self.scaler.to_json() if self.scaler else None,
        }
        path.with_suffix(".schema.json").write_text(json.dumps(schema, indent=2))

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        schema = json.loads(path.with_suffix(".schema.json").read_text())
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        ts = np.array([np.datetime64(r[0].rstrip("Z"), "s") for r in rows], dtype="datetime64[s]")
        data = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float).reshape(len(rows), len(header) - 1)
        cols, aux = {}, {}
        for j, name in enumerate(header[1:]):
            if name.startswith("aux:"):
                aux[name[4:]] = data[:, j]
            else:
                cols[name] = data[:, j]
        scaler = ScalerParams.from_json(schema["scaler"]) if schema.get("scaler") else None
        return cls(ts, cols, aux, scaler)


def feature_column_names(base_features, k=3, parts=BASELINE_PARTS):
    names = []
    for f in base_features:
        if "raw" in parts:
            names.append(f"{f}_raw")
        if "stl" in parts:
            names += [f"{f}_{p}" for p in STL_PARTS]
        if "gsf" in parts:
            for i in range(k):
                names += [f"{f}_gsf_period_{i}", f"{f}_gsf_amp_{i}"]
        if "domfreq" in parts:
            names.append(f"{f}_domfreq")
    return names


def _aligned(values, own_ts, order, ref_ts, what):
    values = np.asarray(values, dtype=float)
    if len(values) != len(ref_ts):
        raise ValueError(f"{what}: length {len(values)} does not match {len(ref_ts)} timestamps")
    if own_ts is None:
        return values[order]
    own_ts = np.asarray(own_ts, dtype="datetime64[s]")
    o = np.argsort(own_ts, kind="stable")
    if not np.array_equal(own_ts[o], ref_ts):
        raise ValueError(f"{what}: timestamps do not align with the clean table")
    return values[o]


def build_feature_matrix(
    clean,
    stl_out,
    spectral_out,
    k=3,
    parts=BASELINE_PARTS,
    train_range=None,
    rescale=True,
    target="WVHT",
):
    """Concatenate per-feature components into one typed matrix.

    ``stl_out`` and ``spectral_out`` map each base feature name to its
    :class:`~swhforecast.stl.StlDecomposition` and :class:`SpectralFeatures`.
    Global spectral features become constant columns (zero-padded when fewer
    than ``k`` periods were significant). With ``rescale`` every column is
    min-max scaled by a second scaler fitted on ``train_range``; constant
    columns map to 0.
    """
    parts = frozenset(parts)
    if not parts or not parts <= ALL_PARTS:
        raise ValueError(f"parts must be a non-empty subset of {sorted(ALL_PARTS)}")
    order = np.argsort(clean.timestamps, kind="stable")
    ts = clean.timestamps[order]
    base = clean.names
    cols = {}
    for f in base:
        if "stl" in parts and f not in stl_out:
            raise ValueError(f"missing decomposition for feature {f}")
        if ({"gsf", "domfreq"} & parts) and f not in spectral_out:
            raise ValueError(f"missing spectral features for feature {f}")
        if "raw" in parts:
            cols[f"{f}_raw"] = clean.columns[f][order]
        if "stl" in parts:
            d = stl_out[f]
            for p in STL_PARTS:
                cols[f"{f}_{p}"] = _aligned(getattr(d, p), d.timestamps, order, ts, f"{f} {p}")
        if "gsf" in parts:
            g = spectral_out[f].gsf
            for i in range(k):
                period = float(g.dominant_periods[i]) if i < len(g.dominant_periods) else 0.0
                amp = float(g.dominant_amplitudes[i]) if i < len(g.dominant_amplitudes) else 0.0
                cols[f"{f}_gsf_period_{i}"] = np.full(len(ts), period)
                cols[f"{f}_gsf_amp_{i}"] = np.full(len(ts), amp)
        if "domfreq" in parts:
            s = spectral_out[f]
            cols[f"{f}_domfreq"] = _aligned(s.domfreq, s.timestamps, order, ts, f"{f} domfreq")
    for name, col in cols.items():
        if np.isnan(col).any():
            raise ValueError(f"column {name} contains NaN")
    aux = {target: clean.columns[target][order]} if target in clean.columns else {}
    scaler = None
    if rescale:
        dense = DenseTable(ts, cols)
        scaler = fit_scaler(dense, train_range, allow_constant=True)
        cols = apply_scaler(dense, scaler).columns
    return FeatureMatrix(ts, cols, aux, scaler)


@dataclass
class SampleSet:
    inputs: np.ndarray  # (samples, lookback, columns)
    targets: np.ndarray  # (samples,)
    timestamps: np.ndarray  # target time of each sample
    window_start: np.ndarray
    window_end: np.ndarray
    last_value: np.ndarray  # target column at window end (persistence forecast)
    columns: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.targets)

    def subset(self, idx):
        return SampleSet(
            self.inputs[idx],
            self.targets[idx],
            self.timestamps[idx],
            self.window_start[idx],
            self.window_end[idx],
            self.last_value[idx],
            list(self.columns),
        )

    def save(self, path):
        sec = lambda a: a.astype("datetime64[s]").astype(np.int64).astype(float)  # noqa: E731
        tensorio.save(
            path,
            {
                "inputs": self.inputs,
                "targets": self.targets,
                "timestamps": sec(self.timestamps),
                "window_start": sec(self.window_start),
                "window_end": sec(self.window_end),
                "last_value": self.last_value,
            },
        )
        Path(str(path) + ".columns.json").write_text(json.dumps(self.columns))

    @classmethod
    def load(cls, path):
        t = tensorio.load(path)
        ts = lambda a: a.astype(np.int64).astype("datetime64[s]")  # noqa: E731
        cols_path = Path(str(path) + ".columns.json")
        columns = json.loads(cols_path.read_text()) if cols_path.exists() else []
        return cls(
            t["inputs"], t["targets"], ts(t["timestamps"]), ts(t["window_start"]),
            ts(t["window_end"]), t["last_value"], columns,
        )


def make_windows(fm, lookback=24, horizon=1, target="WVHT", max_gap_hours=3.0):
    """Stride-1 supervised windows.

    Sample ``i`` uses rows ``e-L+1 .. e`` as input and the target column at
    row ``e+h``. Windows whose span (inputs through target) contains a time
    step longer than ``max_gap_hours`` are dropped.
    """
    if lookback < 1 or horizon < 1:
        raise ValueError("lookback and horizon must be >= 1")
    n = len(fm)
    if n < lookback + horizon:
        raise ValueError(f"need at least {lookback + horizon} rows, have {n}")
    if target in fm.aux:
        tcol = fm.aux[target]
    elif target in fm.columns:
        tcol = fm.columns[target]
    else:
        raise KeyError(f"target column {target!r} not in feature matrix")
    X = fm.array()
    ends = np.arange(lookback - 1, n - horizon)
    steps = np.diff(fm.timestamps).astype("timedelta64[s]").astype(np.int64) / 3600.0
    bad = np.concatenate([[0], np.cumsum(steps > max_gap_hours)])
    # a window spanning rows a..b crosses a gap iff bad[b] != bad[a]
    ok = bad[ends + horizon] == bad[ends - lookback + 1]
    ends = ends[ok]
    idx = ends[:, None] + np.arange(-lookback + 1, 1)
    return SampleSet(
        inputs=X[idx],
        targets=tcol[ends + horizon].copy(),
        timestamps=fm.timestamps[ends + horizon],
        window_start=fm.timestamps[ends - lookback + 1],
        window_end=fm.timestamps[ends],
        last_value=tcol[ends].copy(),
        columns=fm.names,
    )


def split_train_test(data, boundary):
    """Chronological split at ``boundary``.

    Feature matrices split by row time. Sample sets put a sample in train when
    its target precedes the boundary and in test when its whole window starts
    at or after it, so no sample straddles the boundary.
    """
    boundary = np.datetime64(boundary, "s")
    if isinstance(data, SampleSet):
        first, last = data.window_start.min(), data.timestamps.max()
        train_idx = np.flatnonzero(data.timestamps < boundary)
        test_idx = np.flatnonzero(data.window_start >= boundary)
        _check_boundary(boundary, first, last)
        result = data.subset(train_idx), data.subset(test_idx)
    else:
        first, last = data.timestamps.min(), data.timestamps.max()
        _check_boundary(boundary, first, last)
        result = data.select(data.timestamps < boundary), data.select(data.timestamps >= boundary)
    if len(result[1]) == 0:
        log.warning("split at %s leaves an empty test set", boundary)
    return result


def _check_boundary(boundary, first, last):
    if boundary <= first or boundary > last:
        raise ValueError(f"split boundary {boundary} outside covered range ({first}, {last}]")


@dataclass
class CorrelationMatrix:
    names: list[str]
    matrix: np.ndarray
    zero_variance: list[str]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["", *self.names])
            for name, row in zip(self.names, self.matrix):
                w.writerow([name, *(repr(float(v)) for v in row)])


def correlation_matrix(table):
    """Pearson correlation of every column pair; zero-variance columns get 0s."""
    names = list(table.columns)
    X = np.column_stack([table.columns[c] for c in names]).astype(float)
    if X.shape[0] < 2:
        raise ValueError("correlation needs at least two rows")
    Xc = X - X.mean(axis=0)
    norms = np.sqrt((Xc**2).sum(axis=0))
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    C = (Xc.T @ Xc) / np.outer(safe, safe)
    C[zero, :] = 0.0
    C[:, zero] = 0.0
    np.fill_diagonal(C, 1.0)
    C = np.clip((C + C.T) / 2.0, -1.0, 1.0)
    flagged = [n for n, z in zip(names, zero) if z]
    if flagged:
        log.warning("zero-variance columns, correlations set to 0: %s", ", ".join(flagged))
    return CorrelationMatrix(names, C, flagged)
