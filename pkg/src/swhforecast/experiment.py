"""End-to-end runs, the ablation suite and plot-ready data export."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ndbc, synthetic, tensorio
from .features import SpectralFeatures, build_feature_matrix, correlation_matrix, make_windows, split_train_test
from .metrics import METRIC_NAMES, MetricsBlock, evaluate
from .model import (
    ModelConfig,
    build_model,
    config_hash,
    forecast_series,
    persistence_baseline,
    predict,
    save_checkpoint,
    train,
)
from .preprocess import DEFAULT_ANGLE_FEATURES, DenseTable, ScalerParams, invert_scaler, preprocess, train_mask
from .spectral import GlobalSpectralFeatures, dominant_frequency_sequence, global_spectrum, significant_periods, stft
from .stl import StlConfig, StlDecomposition, stl_causal, stl_decompose

log = logging.getLogger(__name__)

VARIANTS = ("Baseline", "dSTL", "dFFT", "dSTFT", "dBoth", "RawTCNLSTM")
ABLATION_VARIANTS = ("Baseline", "dSTL", "dFFT", "dSTFT", "dBoth")
_VARIANT_ALIASES = {"ΔSTL": "dSTL", "ΔFFT": "dFFT", "ΔSTFT": "dSTFT", "ΔBoth": "dBoth"}

# feature groups and spectral source per variant
VARIANT_PARTS = {
    "Baseline": ({"stl", "gsf", "domfreq"}, "residual"),
    "dSTL": ({"raw", "gsf", "domfreq"}, "raw"),
    "dFFT": ({"stl", "domfreq"}, "residual"),
    "dSTFT": ({"stl", "gsf"}, "residual"),
    "dBoth": ({"stl"}, "residual"),
    "RawTCNLSTM": ({"raw"}, "raw"),
}
MODES = ("strict", "paper-faithful")
# strict-mode STL: roll a trailing window over every row after a warm-up, or
# decompose the training rows in one batch and roll only over the test rows
STRICT_STL = ("rolling", "split")


def canonical_variant(name):
    name = _VARIANT_ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {VARIANTS}")
    return name


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, exc):
        self.stage = stage
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")


@dataclass(frozen=True)
class SpectralConfig:
    k: int = 3
    threshold: float = 0.2
    nperseg: int = 128
    noverlap: int = 64
    method: str = "hold"


@dataclass(frozen=True)
class FeatureConfig:
    lookback: int = 24
    horizon: int = 1
    max_gap_hours: float = 3.0


@dataclass(frozen=True)
class SyntheticConfig:
    hours: int = 2880
    seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    station: str = "41008"
    years: tuple = (2019, 2020, 2021, 2022)
    split: str = "2022-01-01T00:00:00"
    stl: StlConfig = field(default_factory=StlConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    variant: str = "Baseline"
    mode: str = "strict"
    strict_stl: str = "rolling"
    angle_features: tuple = DEFAULT_ANGLE_FEATURES
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)

    def __post_init__(self):
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        object.__setattr__(self, "angle_features", tuple(self.angle_features))
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.strict_stl not in STRICT_STL:
            raise ValueError(f"strict_stl must be one of {STRICT_STL}, got {self.strict_stl!r}")
        if self.station != synthetic.SYNTHETIC_STATION:
            if not self.years:
                raise ValueError("years must be non-empty")
            boundary = np.datetime64(self.split, "s")
            first = np.datetime64(f"{min(self.years)}-01-01T00:00:00", "s")
            last = np.datetime64(f"{max(self.years) + 1}-01-01T00:00:00", "s")
            if not first < boundary < last:
                raise ValueError(f"split {self.split} lies outside years {self.years}")

    @property
    def paper_faithful(self):
        return self.mode == "paper-faithful"

    def to_dict(self):
        return json.loads(json.dumps(dataclasses.asdict(self)))

    @classmethod
    def from_dict(cls, doc):
        return _from_dict(cls, doc)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def hash(self):
        return config_hash(self.to_dict())


def _from_dict(cls, doc, path="config"):
    if not isinstance(doc, dict):
        raise ValueError(f"{path} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(fields)
    if unknown:
        raise ValueError(f"unknown keys in {path}: {sorted(unknown)}")
    kwargs = {}
    nested = {"stl": StlConfig, "spectral": SpectralConfig, "features": FeatureConfig, "model": ModelConfig, "synthetic": SyntheticConfig}
    for key, value in doc.items():
        if cls is PipelineConfig and key in nested:
            kwargs[key] = _from_dict(nested[key], value, f"{path}.{key}")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def load_config(path=None, overrides=None):
    doc = json.loads(Path(path).read_text()) if path else {}
    for key, value in (overrides or {}).items():
        target = doc
        *parents, leaf = key.split(".")
        for p in parents:
            target = target.setdefault(p, {})
        target[leaf] = value
    return PipelineConfig.from_dict(doc)


def desk_config(seed=0, **changes):
    """One synthetic year, trained on January to September and tested on the
    last quarter. Runs in a few minutes on one CPU core.

    Batch size 16 (instead of 32) was picked on the validation tail: with
    about 6000 training windows it doubles the optimizer steps per epoch.
    """
    cfg = PipelineConfig(
        station=synthetic.SYNTHETIC_STATION,
        years=(2019,),
        split="2019-10-01T00:00:00",
        model=ModelConfig(batch_size=16, max_epochs=30, patience=8, seed=seed),
        synthetic=SyntheticConfig(hours=8760, seed=seed),
    )
    return cfg.replace(**changes) if changes else cfg


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def load_table(cfg, data_dir=None, fetch=True):
    with _stage("ingest"):
        if cfg.station == synthetic.SYNTHETIC_STATION:
            return synthetic.generate(cfg.synthetic.hours, cfg.synthetic.seed)
        return ndbc.load_station(cfg.station, cfg.years, data_dir=data_dir, fetch=fetch)


@dataclass
class Prepared:
    """Everything upstream of the network that all variants share."""

    config: PipelineConfig
    table: ndbc.TimeSeriesTable
    clean: object
    scaler: ScalerParams
    train_rows: np.ndarray
    decomps: dict = field(default_factory=dict)
    spectral: dict = field(default_factory=dict)  # source -> feature -> SpectralFeatures


def _decompose(series, n_train, cfg):
    """Two-sided STL over the whole series when paper-faithful.

    Strict mode gives every row after a warm-up of eight periods the
    components of its own trailing window, so training and test rows are
    built the same way and no row sees its future. With ``strict_stl="split"``
    the training rows are decomposed in one two-sided pass and only the test
    rows are rolled.
    """
    if cfg.paper_faithful:
        return stl_decompose(series, cfg.stl)
    if cfg.strict_stl == "split":
        return stl_causal(series, n_train, cfg.stl)
    warm = 8 * cfg.stl.period
    if n_train < warm:
        raise ValueError(f"strict mode needs at least {warm} training rows for the STL warm-up, have {n_train}")
    return stl_causal(series, warm, cfg.stl)


def _spectral_features(series, n_train, cfg):
    sc = cfg.spectral
    fit = series if cfg.paper_faithful else series[:n_train]
    spectrum = global_spectrum(fit)
    try:
        gsf = significant_periods(spectrum, sc.threshold, sc.k)
    except ValueError:
        # flat residual: no periods, the feature matrix zero-pads
        gsf = GlobalSpectralFeatures(np.zeros(0), np.zeros(0))
    sg = stft(series, sc.nperseg, sc.noverlap)
    align = "center" if cfg.paper_faithful else "end"
    dom = dominant_frequency_sequence(sg, len(series), align=align, method=sc.method)
    return SpectralFeatures(gsf, dom.per_sample)


def preprocess_stage(cfg, table):
    """Clean, encode and scale ``table``; returns a :class:`Prepared` without
    decompositions or spectral features."""
    with _stage("preprocess"):
        boundary = np.datetime64(cfg.split, "s")
        clean, _, scaler = preprocess(table, (None, boundary), cfg.angle_features, cfg.paper_faithful)
        rows = train_mask(clean.timestamps, (None, boundary))
        n_train = int(rows.sum())
        if n_train == 0 or n_train == len(clean):
            raise ValueError(f"split {cfg.split} leaves no training or no test rows")
    return Prepared(cfg, table, clean, scaler, rows)


def decompose_stage(prepared):
    """STL per clean feature (no-op when already present)."""
    clean, cfg = prepared.clean, prepared.config
    n_train = int(prepared.train_rows.sum())
    with _stage("stl"):
        for f in clean.names:
            if f in prepared.decomps:
                continue
            d = _decompose(clean.columns[f], n_train, cfg)
            d.timestamps = clean.timestamps
            prepared.decomps[f] = d


def spectral_stage(prepared, source):
    """Spectral features of the STL residual or the scaled raw series."""
    if source not in ("residual", "raw"):
        raise ValueError(f"unknown spectral source {source!r}")
    if source in prepared.spectral:
        return
    if source == "residual":
        decompose_stage(prepared)
    clean, cfg = prepared.clean, prepared.config
    n_train = int(prepared.train_rows.sum())
    with _stage("spectral"):
        out = {}
        for f in clean.names:
            series = prepared.decomps[f].residual if source == "residual" else clean.columns[f]
            s = _spectral_features(series, n_train, cfg)
            s.timestamps = clean.timestamps
            out[f] = s
        prepared.spectral[source] = out


def prepare(cfg, table=None, data_dir=None, fetch=True, sources=("residual", "raw"), decompose=True, cache_dir=None):
    """Ingest, preprocess, decompose and extract spectral features.

    ``sources`` lists the series spectral features are computed from: the STL
    residual, the scaled raw series, or both. With ``cache_dir`` the result of
    every stage is stored there and reused by later calls with the same
    upstream configuration.
    """
    prepared = load_prepared(cache_dir, cfg) if cache_dir is not None and table is None else None
    if prepared is None:
        if table is None:
            table = load_table(cfg, data_dir, fetch)
        prepared = preprocess_stage(cfg, table)
    before = (set(prepared.decomps), set(prepared.spectral))
    if decompose:
        decompose_stage(prepared)
    for source in sources:
        spectral_stage(prepared, source)
    if cache_dir is not None and (before != (set(prepared.decomps), set(prepared.spectral)) or not prepared_path(cache_dir, cfg).exists()):
        with _stage("persist"):
            save_prepared(prepared, cache_dir)
    return prepared


def upstream_config(cfg):
    """The configuration fields every stage before feature assembly depends on."""
    doc = cfg.to_dict()
    for key in ("model", "variant", "features"):
        doc.pop(key)
    if cfg.station != synthetic.SYNTHETIC_STATION:
        doc.pop("synthetic")
    return doc


def prepared_path(cache_dir, cfg):
    return Path(cache_dir) / f"prepared-{config_hash(upstream_config(cfg))}.bin"


def _seconds(ts):
    return np.asarray(ts, dtype="datetime64[s]").astype(np.int64).astype(float)


def _stamps(values):
    return np.asarray(values).astype(np.int64).astype("datetime64[s]")


def save_prepared(prepared, cache_dir):
    """Write ``prepared`` as a tensor container plus a JSON sidecar."""
    path = prepared_path(cache_dir, prepared.config)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = {"table.timestamps": _seconds(prepared.table.timestamps), "clean.timestamps": _seconds(prepared.clean.timestamps)}
    t["train_rows"] = prepared.train_rows.astype(float)
    for name, col in prepared.table.columns.items():
        t[f"table.{name}"] = col
    for name, col in prepared.clean.columns.items():
        t[f"clean.{name}"] = col
    for name, d in prepared.decomps.items():
        t[f"stl.{name}.trend"], t[f"stl.{name}.seasonal"], t[f"stl.{name}.residual"] = d.trend, d.seasonal, d.residual
    for source, feats in prepared.spectral.items():
        for name, sf in feats.items():
            t[f"spectral.{source}.{name}.periods"] = sf.gsf.dominant_periods
            t[f"spectral.{source}.{name}.amplitudes"] = sf.gsf.dominant_amplitudes
            t[f"spectral.{source}.{name}.domfreq"] = sf.domfreq
    sidecar = {
        "upstream_config": upstream_config(prepared.config),
        "clean_columns": prepared.clean.names,
        "decomposed": list(prepared.decomps),
        "spectral": {source: list(feats) for source, feats in prepared.spectral.items()},
        "scaler": prepared.scaler.to_json(),
    }
    tmp = path.with_suffix(".tmp")
    tensorio.save(tmp, t)
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    tmp.replace(path)
    return path


def load_prepared(cache_dir, cfg):
    """Cached :class:`Prepared` for ``cfg``'s upstream configuration, or None."""
    path = prepared_path(cache_dir, cfg)
    meta_path = path.with_suffix(".json")
    if not (path.exists() and meta_path.exists()):
        return None
    meta = json.loads(meta_path.read_text())
    if meta["upstream_config"] != upstream_config(cfg):
        return None
    t = tensorio.load(path)
    table = ndbc.TimeSeriesTable(_stamps(t["table.timestamps"]), {f: t[f"table.{f}"] for f in ndbc.FEATURES})
    ts = _stamps(t["clean.timestamps"])
    clean = DenseTable(ts, {name: t[f"clean.{name}"] for name in meta["clean_columns"]})
    prepared = Prepared(cfg, table, clean, ScalerParams.from_json(meta["scaler"]), t["train_rows"].astype(bool))
    for name in meta["decomposed"]:
        prepared.decomps[name] = StlDecomposition(
            t[f"stl.{name}.trend"], t[f"stl.{name}.seasonal"], t[f"stl.{name}.residual"], ts
        )
    for source, names in meta["spectral"].items():
        prepared.spectral[source] = {
            name: SpectralFeatures(
                GlobalSpectralFeatures(t[f"spectral.{source}.{name}.periods"], t[f"spectral.{source}.{name}.amplitudes"]),
                t[f"spectral.{source}.{name}.domfreq"],
                ts,
            )
            for name in names
        }
    log.info("loaded cached stages from %s", path)
    return prepared


@dataclass
class RunResult:
    variant: str
    run_dir: Path | None
    report: object
    metrics: MetricsBlock  # scaled space
    metrics_m: MetricsBlock  # meters
    persistence: MetricsBlock
    timestamps: np.ndarray
    truth: np.ndarray
    prediction: np.ndarray
    persistence_prediction: np.ndarray
    config_hash: str = ""


def build_samples(prepared, variant):
    cfg = prepared.config
    parts, source = VARIANT_PARTS[variant]
    boundary = np.datetime64(cfg.split, "s")
    with _stage("features"):
        fm = build_feature_matrix(
            prepared.clean,
            prepared.decomps,
            prepared.spectral.get(source, {}),
            k=cfg.spectral.k,
            parts=parts,
            train_range=None if cfg.paper_faithful else (None, boundary),
        )
        samples = make_windows(fm, cfg.features.lookback, cfg.features.horizon, "WVHT", cfg.features.max_gap_hours)
        train_set, test_set = split_train_test(samples, boundary)
    return fm, train_set, test_set


def run_variant(prepared, variant=None, out_dir=None):
    """Train and evaluate one variant on prepared data; persist artifacts if ``out_dir``."""
    cfg = prepared.config
    variant = canonical_variant(variant or cfg.variant)
    vcfg = cfg.replace(variant=variant)
    fm, train_set, test_set = build_samples(prepared, variant)
    if len(test_set) == 0:
        raise StageError("features", ValueError("no test samples after the split"))
    with _stage("train"):
        net = build_model(cfg.model, train_set.inputs.shape[1:])
        report = train(net, train_set, cfg.model)
    with _stage("evaluate"):
        pred = predict(net, test_set.inputs)
        pers = persistence_baseline(test_set)
        metrics = evaluate(pred, test_set.targets)
        to_m = lambda v: invert_scaler(v, "WVHT", prepared.scaler)  # noqa: E731
        metrics_m = evaluate(to_m(pred), to_m(test_set.targets))
        pers_metrics = evaluate(pers, test_set.targets)
        report.metrics = {"scaled": metrics.to_json(), "meters": metrics_m.to_json(), "persistence": pers_metrics.to_json()}
    result = RunResult(
        variant, None, report, metrics, metrics_m, pers_metrics,
        test_set.timestamps, test_set.targets, pred, pers, vcfg.hash(),
    )
    if out_dir is not None:
        with _stage("persist"):
            result.run_dir = _persist_run(Path(out_dir), vcfg, prepared, fm, net, result)
    return result


def _persist_run(out, cfg, prepared, fm, net, result):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    scalers = {"base": prepared.scaler.to_json(), "features": fm.scaler.to_json() if fm.scaler else None}
    (out / "scalers.json").write_text(json.dumps(scalers, indent=2))
    save_checkpoint(net, out, {"variant": result.variant, "columns": fm.names, "pipeline_config_hash": result.config_hash})
    report = result.report.to_json()
    report.pop("wall_time")
    report.update({"variant": result.variant, "pipeline_config_hash": result.config_hash})
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    (out / "timing.json").write_text(json.dumps({"train_wall_time_s": result.report.wall_time}))
    from .metrics import write_metrics_csv

    write_metrics_csv(out / "metrics.csv", {"scaled": result.metrics, "meters": result.metrics_m, "persistence": result.persistence})
    boundary = np.datetime64(cfg.split, "s")
    fs = forecast_series(
        net, fm, (boundary, None), prepared.scaler, cfg.features.lookback, cfg.features.horizon,
        "WVHT", cfg.features.max_gap_hours,
    )
    fs.to_csv(out / "forecasts.csv")
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "truth", "prediction", "persistence"])
        for row in zip(result.timestamps, result.truth, result.prediction, result.persistence_prediction):
            w.writerow([str(row[0]) + "Z", *(repr(float(v)) for v in row[1:])])
    correlation_matrix(prepared.clean).to_csv(out / "correlation.csv")
    return out


def run_pipeline(cfg, out_dir=None, data_dir=None, fetch=True, table=None, cache_dir=None):
    """Ingest through evaluation for ``cfg.variant``."""
    parts, source = VARIANT_PARTS[cfg.variant]
    prepared = prepare(cfg, table, data_dir, fetch, sources=(source,), decompose="stl" in parts, cache_dir=cache_dir)
    return run_variant(prepared, cfg.variant, out_dir)


@dataclass
class ComparisonReport:
    metrics: dict  # variant -> MetricsBlock (scaled)
    metrics_m: dict
    persistence: MetricsBlock
    deltas: dict  # variant -> metric -> value minus Baseline
    provenance: dict

    def to_json(self):
        return {
            "metrics": {k: v.to_json() for k, v in self.metrics.items()},
            "metrics_meters": {k: v.to_json() for k, v in self.metrics_m.items()},
            "persistence": self.persistence.to_json(),
            "deltas_vs_baseline": self.deltas,
            "provenance": self.provenance,
        }


def run_ablation_suite(cfg, variants=ABLATION_VARIANTS, out_dir=None, data_dir=None, fetch=True, table=None, cache_dir=None):
    """Run every variant on shared preprocessing, seeds and split."""
    variants = [canonical_variant(v) for v in variants]
    if not variants:
        raise ValueError("variant set is empty")
    sources = sorted({VARIANT_PARTS[v][1] for v in variants})
    prepared = prepare(cfg, table, data_dir, fetch, sources=sources, cache_dir=cache_dir)
    out = Path(out_dir) if out_dir is not None else None
    results = {}
    for v in variants:
        results[v] = run_variant(prepared, v, out / v if out else None)
    ref = results[variants[0]]
    for v, r in results.items():
        if not (np.array_equal(r.timestamps, ref.timestamps) and np.array_equal(r.truth, ref.truth)):
            raise StageError("evaluate", ValueError(f"variant {v} evaluated on different test targets"))
    report = comparison_report(results, cfg)
    if out is not None:
        (out / "comparison.json").write_text(json.dumps(report.to_json(), indent=2, sort_keys=True))
        manifest = {
            "pipeline_config_hash": cfg.hash(),
            "runs": {v: {"dir": v, "config_hash": r.config_hash} for v, r in results.items()},
            "order": list(results),
            "comparison": "comparison.json",
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return report, results


def comparison_report(results, cfg):
    metrics = {v: r.metrics for v, r in results.items()}
    base = metrics.get("Baseline")
    deltas = {}
    if base is not None:
        for v, m in metrics.items():
            deltas[v] = {name: getattr(m, name) - getattr(base, name) for name in METRIC_NAMES}
    first = next(iter(results.values()))
    return ComparisonReport(
        metrics,
        {v: r.metrics_m for v, r in results.items()},
        first.persistence,
        deltas,
        {v: {"config_hash": r.config_hash, "seed": cfg.model.seed} for v, r in results.items()},
    )


def _read_predictions(run_dir):
    with open(Path(run_dir) / "predictions.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (
        [r["timestamp"] for r in rows],
        np.array([float(r["truth"]) for r in rows]),
        np.array([float(r["prediction"]) for r in rows]),
    )


def emit_plot_data(run_root, out_dir=None, variants=None):
    """Write scatter/series/metrics/error-distribution CSVs from a suite run root."""
    run_root = Path(run_root)
    out = Path(out_dir) if out_dir is not None else run_root / "plot_data"
    out.mkdir(parents=True, exist_ok=True)
    manifest = json.loads((run_root / "manifest.json").read_text())
    variants = list(variants or manifest.get("order", manifest["runs"]))
    comparison = json.loads((run_root / manifest["comparison"]).read_text())
    preds = {}
    stamps = truth = None
    for v in variants:
        ts, t, p = _read_predictions(run_root / manifest["runs"][v]["dir"])
        if truth is None:
            stamps, truth = ts, t
        preds[v] = p
    with open(out / "scatter.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["truth", *variants])
        for i in range(len(truth)):
            w.writerow([repr(float(truth[i])), *(repr(float(preds[v][i])) for v in variants)])
    with open(out / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "truth", *variants])
        for i in range(len(truth)):
            w.writerow([stamps[i], repr(float(truth[i])), *(repr(float(preds[v][i])) for v in variants)])
    with open(out / "metrics_long.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "metric", "value"])
        for v in variants:
            for name in METRIC_NAMES:
                w.writerow([v, name, repr(comparison["metrics"][v][name])])
    with open(out / "error_distribution.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "index", "residual"])
        for v in variants:
            for i, r in enumerate(preds[v] - truth):
                w.writerow([v, i, repr(float(r))])
    with open(out / "box_stats.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "min", "q1", "median", "q3", "max"])
        for v in variants:
            q = np.quantile(preds[v] - truth, [0.0, 0.25, 0.5, 0.75, 1.0])
            w.writerow([v, *(repr(float(x)) for x in q)])
    return out


def export_decomposition(prepared, feature, path):
    d: StlDecomposition = prepared.decomps[feature]
    d.to_csv(path, prepared.clean.timestamps, prepared.clean.columns[feature])


def evaluate_checkpoint(run_dir, cfg=None, data_dir=None, fetch=True, table=None, cache_dir=None):
    """Reload a trained run and recompute its test metrics."""
    from .model import load_checkpoint

    run_dir = Path(run_dir)
    net, manifest = load_checkpoint(run_dir)
    if cfg is None:
        cfg = PipelineConfig.from_dict(json.loads((run_dir / "config.json").read_text()))
    variant = manifest.get("variant", cfg.variant)
    parts, source = VARIANT_PARTS[variant]
    prepared = prepare(cfg, table, data_dir, fetch, sources=(source,), decompose="stl" in parts, cache_dir=cache_dir)
    _, _, test_set = build_samples(prepared, variant)
    if list(test_set.columns) != list(manifest.get("columns", test_set.columns)):
        raise StageError("evaluate", ValueError("feature columns differ from the checkpoint"))
    with _stage("evaluate"):
        pred = predict(net, test_set.inputs)
        blocks = {
            "scaled": evaluate(pred, test_set.targets),
            "meters": evaluate(
                invert_scaler(pred, "WVHT", prepared.scaler), invert_scaler(test_set.targets, "WVHT", prepared.scaler)
            ),
            "persistence": evaluate(persistence_baseline(test_set), test_set.targets),
        }
        from .metrics import write_metrics_csv

        write_metrics_csv(run_dir / "metrics.csv", blocks)
    return blocks
