"""TCN-LSTM forecaster: construction, training, inference and checkpoints."""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensorio
from .features import make_windows
from .nn import AdamState, BatchNormState, LstmParams, TcnBlockParams, Tensor, adam_step, dense, lstm_forward, mse_loss, tcn_block_forward
from .preprocess import invert_scaler

log = logging.getLogger(__name__)


def config_hash(obj):
    """Stable short hash of a JSON-serialisable config."""
    if dataclasses.is_dataclass(obj):
        obj = dataclasses.asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ModelConfig:
    kernel_size: int = 3
    channels: int = 32
    dilations: tuple = (1, 2, 4)
    dropout: float = 0.2
    hidden: int = 64
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    val_fraction: float = 0.1
    seed: int = 0
    canonical_residual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if not self.dilations:
            raise ValueError("dilations must be non-empty")
        if list(self.dilations) != sorted(self.dilations) or min(self.dilations) < 1:
            raise ValueError(f"dilations must be positive and ascending, got {self.dilations}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.kernel_size < 1 or self.channels < 1 or self.hidden < 1 or self.batch_size < 1:
            raise ValueError("kernel_size, channels, hidden and batch_size must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


class Network:
    """Parameter store and forward pass for TCN blocks -> LSTM -> dense(1)."""

    def __init__(self, config, input_shape, params, bn_states):
        self.config = config
        self.input_shape = tuple(input_shape)
        self.params = params
        self.bn_states = bn_states

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params.values()))

    def layer_graph(self):
        cfg = self.config
        graph = [
            {"type": "tcn_block", "dilation": d, "kernel_size": cfg.kernel_size, "channels": cfg.channels, "dropout": cfg.dropout}
            for d in cfg.dilations
        ]
        graph.append({"type": "lstm", "hidden": cfg.hidden})
        graph.append({"type": "dense", "units": 1})
        return graph

    def _blocks(self, P):
        cfg = self.config
        for j, d in enumerate(cfg.dilations):
            pre = f"tcn{j}"
            bn1, bn2 = self.bn_states[j]
            yield TcnBlockParams(
                conv1=P[f"{pre}.conv1.weight"], conv1_bias=P[f"{pre}.conv1.bias"],
                conv2=P[f"{pre}.conv2.weight"], conv2_bias=P[f"{pre}.conv2.bias"],
                bn1_gamma=P[f"{pre}.bn1.gamma"], bn1_beta=P[f"{pre}.bn1.beta"],
                bn2_gamma=P[f"{pre}.bn2.gamma"], bn2_beta=P[f"{pre}.bn2.beta"],
                dilation=d, dropout=cfg.dropout,
                proj=P.get(f"{pre}.proj.weight"), proj_bias=P.get(f"{pre}.proj.bias"),
                bn1=bn1, bn2=bn2,
            )

    def forward(self, x, training=False, rng=None, requires_grad=False):
        """Return ``(predictions (B,), leaves)`` for inputs ``(B, L, C)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 3 or x.shape[1:] != self.input_shape:
            raise ValueError(f"expected inputs of shape (B, {self.input_shape[0]}, {self.input_shape[1]}), got {x.shape}")
        P = {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}
        h = Tensor(x)
        for block in self._blocks(P):
            h = tcn_block_forward(h, block, training, rng, self.config.canonical_residual)
        lstm = LstmParams(
            P["lstm.W_f"], P["lstm.W_i"], P["lstm.W_C"], P["lstm.W_o"],
            P["lstm.b_f"], P["lstm.b_i"], P["lstm.b_C"], P["lstm.b_o"],
        )
        _, h_T, _ = lstm_forward(h, lstm)
        out = dense(h_T, P["dense.weight"], P["dense.bias"])
        return out.reshape(-1), P

    def state_tensors(self):
        tensors = dict(self.params)
        for j, (bn1, bn2) in enumerate(self.bn_states):
            for name, bn in (("bn1", bn1), ("bn2", bn2)):
                tensors[f"tcn{j}.{name}.running_mean"] = bn.running_mean
                tensors[f"tcn{j}.{name}.running_var"] = bn.running_var
        return tensors

    def snapshot(self):
        return {k: v.copy() for k, v in self.params.items()}, copy.deepcopy(self.bn_states)

    def restore(self, snap):
        params, bn = snap
        self.params = {k: v.copy() for k, v in params.items()}
        self.bn_states = copy.deepcopy(bn)


def parameter_count(config, n_features):
    """Closed-form parameter count of the layer graph."""
    k, C, H = config.kernel_size, config.channels, config.hidden
    total = 0
    c_in = n_features
    for _ in config.dilations:
        total += k * c_in * C + C + k * C * C + C + 4 * C
        if c_in != C:
            total += c_in * C + C
        c_in = C
    total += 4 * (H * (H + C) + H)
    return total + H + 1


def build_model(config, input_shape):
    """Initialise a :class:`Network` for windows of shape ``(lookback, n_features)``."""
    L, C_in = input_shape
    if L < 1 or C_in < 1:
        raise ValueError(f"invalid input shape {input_shape}")
    rng = np.random.default_rng(config.seed)
    k, C, H = config.kernel_size, config.channels, config.hidden

    def he_uniform(shape, fan_in):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params = {}
    bn_states = []
    c_in = C_in
    for j, _ in enumerate(config.dilations):
        pre = f"tcn{j}"
        params[f"{pre}.conv1.weight"] = he_uniform((k, c_in, C), k * c_in)
        params[f"{pre}.conv1.bias"] = np.zeros(C)
        params[f"{pre}.bn1.gamma"] = np.ones(C)
        params[f"{pre}.bn1.beta"] = np.zeros(C)
        params[f"{pre}.conv2.weight"] = he_uniform((k, C, C), k * C)
        params[f"{pre}.conv2.bias"] = np.zeros(C)
        params[f"{pre}.bn2.gamma"] = np.ones(C)
        params[f"{pre}.bn2.beta"] = np.zeros(C)
        if c_in != C:
            params[f"{pre}.proj.weight"] = he_uniform((c_in, C), c_in)
            params[f"{pre}.proj.bias"] = np.zeros(C)
        bn_states.append((BatchNormState.fresh(C), BatchNormState.fresh(C)))
        c_in = C
    bound = 1.0 / np.sqrt(H + C)
    for gate in ("f", "i", "C", "o"):
        params[f"lstm.W_{gate}"] = rng.uniform(-bound, bound, size=(H, H + C))
        params[f"lstm.b_{gate}"] = np.ones(H) if gate == "f" else np.zeros(H)
    params["dense.weight"] = he_uniform((H, 1), H)
    params["dense.bias"] = np.zeros(1)
    net = Network(config, (L, C_in), params, bn_states)
    log.info("built TCN-LSTM with %d parameters", net.n_params)
    return net


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_mae: list = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0
    wall_time: float = 0.0
    config_hash: str = ""
    seed: int = 0
    n_params: int = 0
    metrics: dict = field(default_factory=dict)

    def to_json(self):
        return dataclasses.asdict(self)


class DegenerateTargetError(ValueError):
    pass


def _batches(n, size):
    starts = list(range(0, n, size))
    bounds = [(s, min(n, s + size)) for s in starts]
    # a trailing single-sample batch would break batch statistics
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] == 1:
        bounds[-2] = (bounds[-2][0], n)
        bounds.pop()
    return bounds


def predict(net, inputs, batch_size=512):
    """Scaled forecasts in inference mode (running BN stats, no dropout)."""
    inputs = np.asarray(inputs, dtype=float)
    out = [net.forward(inputs[s:e])[0].data for s, e in _batches(len(inputs), batch_size)] if len(inputs) else []
    return np.concatenate(out) if out else np.empty(0)


def train(net, samples, config=None, log_every=1):
    """Mini-batch Adam on MSE with early stopping on validation MAE.

    The validation set is the chronological tail (``val_fraction``) of the
    training samples. The best epoch's parameters are restored on return.
    """
    cfg = config or net.config
    n = len(samples)
    if n == 0:
        raise ValueError("empty training set")
    if np.ptp(samples.targets) == 0:
        raise DegenerateTargetError("degenerate target: training targets have zero variance")
    n_val = int(round(n * cfg.val_fraction))
    n_fit = n - n_val
    if n_fit < 2:
        raise ValueError("not enough training samples after the validation split")
    X, y = samples.inputs, samples.targets
    X_fit, y_fit = X[:n_fit], y[:n_fit]
    X_val, y_val = X[n_fit:], y[n_fit:]

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[0])
    dropout_rng = np.random.default_rng(seeds[1])
    state = AdamState(lr=cfg.lr)
    report = TrainReport(config_hash=config_hash(cfg), seed=cfg.seed, n_params=net.n_params)
    best = (np.inf, None)
    since_best = 0
    start = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(n_fit)
        losses = []
        for s, e in _batches(n_fit, cfg.batch_size):
            idx = order[s:e]
            pred, leaves = net.forward(X_fit[idx], training=True, rng=dropout_rng, requires_grad=True)
            loss = mse_loss(pred, y_fit[idx])
            if not np.isfinite(loss.data):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {s // cfg.batch_size} "
                    f"(lr={cfg.lr}, batch_size={e - s}); lower the learning rate or check inputs"
                )
            loss.backward()
            adam_step(net.params, {k: t.grad for k, t in leaves.items()}, state)
            losses.append(float(loss.data) * (e - s))
        report.train_loss.append(sum(losses) / n_fit)
        if n_val:
            p = predict(net, X_val)
            report.val_loss.append(float(np.mean((p - y_val) ** 2)))
            score = float(np.mean(np.abs(p - y_val)))
        else:
            p = predict(net, X_fit)
            report.val_loss.append(float(np.mean((p - y_fit) ** 2)))
            score = float(np.mean(np.abs(p - y_fit)))
        report.val_mae.append(score)
        report.epochs_run = epoch + 1
        if log_every and epoch % log_every == 0:
            log.info("epoch %d train_loss=%.6g val_mae=%.6g", epoch, report.train_loss[-1], score)
        if score < best[0]:
            best = (score, net.snapshot())
            report.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break
    net.restore(best[1])
    report.wall_time = time.perf_counter() - start
    return report


def persistence_baseline(samples):
    """Forecast the last observed target value in each input window."""
    return np.asarray(samples.last_value, dtype=float).copy()


@dataclass
class ForecastSeries:
    timestamps: np.ndarray
    forecast: np.ndarray  # meters; NaN where no valid window exists
    truth: np.ndarray  # meters

    @property
    def present(self):
        return ~np.isnan(self.forecast)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "truth_m", "forecast_m"])
            for ts, t, f in zip(self.timestamps, self.truth, self.forecast):
                w.writerow([str(ts) + "Z", repr(float(t)), "" if np.isnan(f) else repr(float(f))])


def forecast_series(net, fm, time_range, scaler, lookback, horizon=1, target="WVHT", max_gap_hours=3.0):
    """Forecasts in meters for every row of ``fm`` whose time lies in ``time_range``.

    Rows without a gap-free input window are left absent (NaN).
    """
    start, end = (np.datetime64(t, "s") if t is not None else None for t in time_range)
    samples = make_windows(fm, lookback, horizon, target, max_gap_hours)
    rows = np.ones(len(fm), dtype=bool)
    if start is not None:
        rows &= fm.timestamps >= start
    if end is not None:
        rows &= fm.timestamps < end
    ts = fm.timestamps[rows]
    tcol = fm.aux[target] if target in fm.aux else fm.columns[target]
    truth = invert_scaler(tcol[rows], target, scaler)
    out = np.full(len(ts), np.nan)
    keep = np.isin(samples.timestamps, ts)
    if keep.any():
        pred = predict(net, samples.inputs[keep])
        pos = np.searchsorted(ts, samples.timestamps[keep])
        out[pos] = invert_scaler(pred, target, scaler)
    return ForecastSeries(ts, out, np.atleast_1d(truth))


def save_checkpoint(net, directory, extra=None):
    """Write ``model.json`` (manifest) and ``model.bin`` (little-endian float64 tensors)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = net.state_tensors()
    tensorio.save(directory / "model.bin", tensors)
    manifest = {
        "format": "swhforecast-checkpoint/1",
        "byte_order": "little",
        "dtype": "float64",
        "payload": "model.bin",
        "config": dataclasses.asdict(net.config),
        "config_hash": config_hash(net.config),
        "seed": net.config.seed,
        "input_shape": list(net.input_shape),
        "layer_graph": net.layer_graph(),
        "tensors": {k: list(v.shape) for k, v in tensors.items()},
        "n_params": net.n_params,
    }
    if extra:
        manifest.update(extra)
    (directory / "model.json").write_text(json.dumps(manifest, indent=2))


def load_checkpoint(directory):
    directory = Path(directory)
    manifest_path = directory / "model.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"missing checkpoint: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    cfg = ModelConfig(**manifest["config"])
    tensors = tensorio.load(directory / manifest["payload"])
    net = build_model(cfg, tuple(manifest["input_shape"]))
    for name in net.params:
        net.params[name] = tensors[name].reshape(manifest["tensors"][name])
    for j, (bn1, bn2) in enumerate(net.bn_states):
        for name, bn in (("bn1", bn1), ("bn2", bn2)):
            bn.running_mean = tensors[f"tcn{j}.{name}.running_mean"]
            bn.running_var = tensors[f"tcn{j}.{name}.running_var"]
    return net, manifest
