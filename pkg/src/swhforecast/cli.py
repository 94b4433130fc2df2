"""Command-line entry point: ``swhforecast <command> [options]``.

Exit status is 0 on success, 1 when a pipeline stage fails and 2 for usage
errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, ndbc
from .experiment import (
    ABLATION_VARIANTS,
    MODES,
    StageError,
    emit_plot_data,
    evaluate_checkpoint,
    export_decomposition,
    load_config,
    prepare,
    run_ablation_suite,
    run_pipeline,
)
from .features import correlation_matrix
from .spectral import global_spectrum, stft

log = logging.getLogger("swhforecast")


def parse_years(text):
    """``2019-2022`` or ``2019,2021`` into a tuple of ints."""
    try:
        if "-" in text:
            lo, hi = (int(p) for p in text.split("-", 1))
            if hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1))
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid year list {text!r}") from None


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", type=Path, help="pipeline configuration JSON")
    g.add_argument("--seed", type=int, help="seed for initialisation, shuffling and dropout")
    g.add_argument("--data-dir", type=Path, help="raw NDBC cache directory")
    g.add_argument("--out", type=Path, default=Path("runs"), help="output directory (default: runs)")
    g.add_argument("--station", help="NDBC station id, or 'synthetic'")
    g.add_argument("--years", type=parse_years, help="years, e.g. 2019-2022")
    g.add_argument("--split", help="train/test boundary timestamp")
    g.add_argument("--variant", help="model variant")
    g.add_argument("--mode", choices=MODES, help="leakage handling")
    g.add_argument("--feature", action="append", help="restrict to this base feature (repeatable)")
    g.add_argument("--max-epochs", type=int, help="override the training epoch budget")
    g.add_argument("--offline", action="store_true", help="never download; use cached files only")
    g.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    return p


COMMANDS = {
    "fetch": "download and cache raw station files",
    "prepare": "clean, encode and scale the station table",
    "decompose": "write STL components per feature",
    "spectra": "write global spectra and STFT spectrograms",
    "train": "train one variant and evaluate it on the test split",
    "evaluate": "re-evaluate a trained run from its checkpoint",
    "ablate": "train and compare the ablation variants",
    "plot-data": "export plot-ready CSVs from an ablation run",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="swhforecast",
        description="Hourly significant wave height forecasting from NDBC buoy data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    common = _common()
    for name, help_text in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "ablate":
            sp.add_argument("--variants", default=",".join(ABLATION_VARIANTS), help="comma-separated variant list")
        if name == "evaluate":
            sp.add_argument("--run", type=Path, help="run directory (default: <out>/<variant>)")
    return parser


def config_from_args(args):
    overrides = {}
    for key in ("station", "split", "variant", "mode"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    if args.years is not None:
        overrides["years"] = list(args.years)
    if args.seed is not None:
        overrides["model.seed"] = args.seed
        overrides["synthetic.seed"] = args.seed
    if args.max_epochs is not None:
        overrides["model.max_epochs"] = args.max_epochs
    return load_config(args.config, overrides)


def _features(args, prepared):
    names = args.feature or prepared.clean.names
    unknown = set(names) - set(prepared.clean.names)
    if unknown:
        raise ValueError(f"unknown features {sorted(unknown)}; available: {prepared.clean.names}")
    return names


def _run(args):
    cfg = config_from_args(args)
    out = args.out
    fetch = not args.offline
    # stage outputs shared by all commands writing under the same --out
    cache = out / "cache"
    if args.command == "fetch":
        for year in cfg.years:
            path = ndbc.fetch_station_year(cfg.station, year, data_dir=args.data_dir)
            print(path)
    elif args.command == "prepare":
        prepared = prepare(cfg, data_dir=args.data_dir, fetch=fetch, sources=(), decompose=False, cache_dir=cache)
        out.mkdir(parents=True, exist_ok=True)
        ndbc.write_csv(prepared.table, out / "raw.csv")
        _write_dense(prepared.clean, out / "clean.csv")
        prepared.scaler.save(out / "scalers.json")
        correlation_matrix(prepared.clean).to_csv(out / "correlation.csv")
        print(out / "clean.csv")
    elif args.command == "decompose":
        prepared = prepare(cfg, data_dir=args.data_dir, fetch=fetch, sources=(), cache_dir=cache)
        (out / "stl").mkdir(parents=True, exist_ok=True)
        for f in _features(args, prepared):
            export_decomposition(prepared, f, out / "stl" / f"{f}.csv")
        print(out / "stl")
    elif args.command == "spectra":
        prepared = prepare(cfg, data_dir=args.data_dir, fetch=fetch, sources=("residual",), cache_dir=cache)
        d = out / "spectra"
        d.mkdir(parents=True, exist_ok=True)
        summary = {}
        for f in _features(args, prepared):
            residual = prepared.decomps[f].residual
            global_spectrum(residual).to_csv(d / f"{f}_spectrum.csv")
            stft(residual, cfg.spectral.nperseg, cfg.spectral.noverlap).to_csv(d / f"{f}_stft.csv")
            g = prepared.spectral["residual"][f].gsf
            summary[f] = {"periods": g.dominant_periods.tolist(), "amplitudes": g.dominant_amplitudes.tolist()}
        (d / "gsf.json").write_text(json.dumps(summary, indent=2))
        print(d)
    elif args.command == "train":
        result = run_pipeline(cfg, out / cfg.variant, data_dir=args.data_dir, fetch=fetch, cache_dir=cache)
        _print_metrics(result.variant, result.metrics, result.persistence)
    elif args.command == "evaluate":
        run_dir = args.run or out / cfg.variant
        blocks = evaluate_checkpoint(run_dir, cfg if args.config else None, data_dir=args.data_dir, fetch=fetch, cache_dir=cache)
        _print_metrics(run_dir.name, blocks["scaled"], blocks["persistence"])
    elif args.command == "ablate":
        variants = [v for v in args.variants.split(",") if v]
        report, _ = run_ablation_suite(cfg, variants, out, data_dir=args.data_dir, fetch=fetch, cache_dir=cache)
        for v, m in report.metrics.items():
            _print_metrics(v, m, None)
        _print_metrics("persistence", report.persistence, None)
    elif args.command == "plot-data":
        print(emit_plot_data(out))


def _write_dense(table, path):
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", *table.names])
        cols = [table.columns[n] for n in table.names]
        for i, ts in enumerate(table.timestamps):
            w.writerow([str(ts) + "Z", *(repr(float(c[i])) for c in cols)])


def _print_metrics(label, m, persistence):
    line = f"{label:<12} rmse={m.rmse:.4f} mae={m.mae:.4f} smape={m.smape:.2f} r2={m.r2:.4f} cc={m.cc:.4f}"
    if persistence is not None:
        line += f"  (persistence rmse={persistence.rmse:.4f} r2={persistence.r2:.4f})"
    print(line)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (StageError, ValueError, OSError, ndbc.FetchError) as exc:
        print(f"swhforecast {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
