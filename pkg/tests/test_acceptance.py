"""Acceptance checks, one per criterion, each at its stated tolerance.

Every ``check_*`` function returns ``(passed, detail)``. The pytest wrappers
record the outcome and ``conftest.pytest_terminal_summary`` prints one
``ACCEPTANCE`` line per criterion at the end of the session. Running this
file directly (``python tests/test_acceptance.py``) prints the same lines.

The real-buoy checks read station 41008 from the local cache
(``$SWHFORECAST_DATA_DIR``) and try to download missing years. Without the
data they fail and say why.
"""

import dataclasses
import re
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from swhforecast import experiment as E  # noqa: E402
from swhforecast import ndbc  # noqa: E402
from swhforecast import preprocess as pp  # noqa: E402
from swhforecast.metrics import evaluate, mae, r2, rmse, smape  # noqa: E402
from swhforecast.model import ModelConfig  # noqa: E402
from swhforecast.preprocess import AngleEncoding, ScalerParams  # noqa: E402
from swhforecast.spectral import dft_naive, fft  # noqa: E402
from swhforecast.stl import StlConfig, stl_decompose  # noqa: E402

from gradcheck import max_relative_error  # noqa: E402

REAL_STATION = "41008"
REAL_YEARS = (2019, 2020, 2021, 2022)
WVHT_BOUNDS = (0.20, 4.54)
REAL_MAE_LIMIT = 2 * 0.0124
REAL_R2_LIMIT = 0.95
REAL_SEEDS = (0, 1, 2)
DESK_SEED = 0

RESULTS = {}


def _fmt(x):
    return f"{x:.3g}"


# 1 ------------------------------------------------------------------------


def check_fft(n_inputs=1000, seed=2024, budget=30.0):
    """fft against the O(N^2) oracle on random complex inputs, N = 2..4096."""
    rng = np.random.default_rng(seed)
    sizes = 2 ** rng.integers(1, 13, size=n_inputs)
    t0 = time.perf_counter()
    worst_rel = worst_parseval = 0.0
    for N in np.unique(sizes):
        count = int(np.sum(sizes == N))
        x = rng.normal(size=(count, N)) + 1j * rng.normal(size=(count, N))
        fast, slow = fft(x), dft_naive(x)
        rel = np.max(np.abs(fast - slow), axis=1) / np.max(np.abs(slow), axis=1)
        energy = np.sum(np.abs(x) ** 2, axis=1)
        parseval = np.abs(energy - np.sum(np.abs(fast) ** 2, axis=1) / N) / energy
        worst_rel = max(worst_rel, float(rel.max()))
        worst_parseval = max(worst_parseval, float(parseval.max()))
    elapsed = time.perf_counter() - t0
    ok = worst_rel <= 1e-9 and worst_parseval <= 1e-8 and elapsed < budget
    return ok, (
        f"{n_inputs} inputs, max rel err {_fmt(worst_rel)} (<= 1e-9), "
        f"Parseval {_fmt(worst_parseval)} (<= 1e-8), {elapsed:.1f} s (< {budget:.0f} s)"
    )


# 2 ------------------------------------------------------------------------


def _identity_error(y, d):
    return float(np.max(np.abs(d.trend + d.seasonal + d.residual - y)))


def check_stl(seed=7, budget=60.0):
    """Reconstruction, seasonal variance share and spike robustness."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    identity = 0.0
    # reconstruction over a spread of lengths, periods and robustness settings
    for n, period, outer in [(48, 12, 0), (100, 7, 1), (240, 24, 2), (500, 24, 1), (1000, 24, 0), (2000, 24, 3)]:
        y = rng.normal(size=n).cumsum() + np.sin(2 * np.pi * np.arange(n) / period)
        cfg = StlConfig(period=period, seasonal_span=7 if period < 24 else 35, outer_iters=outer)
        identity = max(identity, _identity_error(y, stl_decompose(y, cfg)))

    t = np.arange(24 * 60, dtype=float)
    y = np.sin(2 * np.pi * t / 24) + 0.0001 * t
    d = stl_decompose(y, StlConfig(period=24, outer_iters=1))
    identity = max(identity, _identity_error(y, d))
    share = float(np.var(d.seasonal) / np.var(y))

    # spike robustness over ten noise draws, for one and two robustness passes
    shifts = {1: 0.0, 2: 0.0}
    for draw in range(10):
        noisy = np.sin(2 * np.pi * t / 24) + 0.002 * t + np.random.default_rng(draw).normal(0, 0.05, t.size)
        spread = noisy.max() - noisy.min()
        k = 200
        spiked = noisy.copy()
        spiked[k] += 10 * spread
        others = np.arange(t.size) != k
        for outer in shifts:
            cfg = StlConfig(outer_iters=outer)
            a, b = stl_decompose(noisy, cfg), stl_decompose(spiked, cfg)
            identity = max(identity, _identity_error(noisy, a), _identity_error(spiked, b))
            shifts[outer] = max(shifts[outer], float(np.max(np.abs(a.trend - b.trend)[others]) / spread))
    elapsed = time.perf_counter() - t0
    ok = identity <= 1e-10 and share >= 0.95 and max(shifts.values()) < 0.05 and elapsed < budget
    return ok, (
        f"identity {_fmt(identity)} (<= 1e-10), seasonal share {share:.4f} (>= 0.95), "
        f"worst spike trend shift {100 * shifts[1]:.2f}% with 1 robustness pass and "
        f"{100 * shifts[2]:.2f}% with 2 (< 5%), {elapsed:.1f} s (< {budget:.0f} s)"
    )


# 3 ------------------------------------------------------------------------


def check_gradients(seeds=range(20), budget=300.0):
    """Backprop vs central differences on a 2-feature, T=8, H=4 network."""
    t0 = time.perf_counter()
    runs = [max_relative_error(s, lookback=8, n_features=2) for s in seeds]
    elapsed = time.perf_counter() - t0
    worst = max(r[0] for r in runs)
    kinks = sum(r[2] for r in runs)
    ok = worst < 1e-4 and elapsed < budget
    return ok, (
        f"{len(runs)} seeds, worst rel err {_fmt(worst)} (< 1e-4), "
        f"{kinks} of {sum(r[1] for r in runs)} entries re-probed at a ReLU kink, {elapsed:.1f} s (< {budget:.0f} s)"
    )


# 4 ------------------------------------------------------------------------


def check_metrics(n_vectors=1000, seed=11):
    """Unit examples and properties on random vectors."""
    failures = []
    t = np.array([0.3, 0.5, 0.9])
    m = evaluate(t, t)
    if (m.rmse, m.mae, m.smape, m.r2, m.cc) != (0.0, 0.0, 0.0, 1.0, 1.0):
        failures.append("perfect fit")
    if not (mae([3], [1]) == 2 and rmse([3], [1]) == 2 and abs(smape([3], [1]) - 100.0) < 1e-12):
        failures.append("single term")
    t = np.array([1.0, 2.0, 4.0, 7.0])
    if abs(r2(np.full(4, t.mean()), t)) > 1e-15:
        failures.append("mean prediction")
    truth, pred = [1.0, 2.0, 3.0], [1.1, 1.9, 3.2]
    if not (abs(mae(pred, truth) - 0.4 / 3) < 1e-12 and abs(rmse(pred, truth) - (0.06 / 3) ** 0.5) < 1e-12
            and abs(r2(pred, truth) - 0.97) < 1e-12):
        failures.append("three-point example")

    rng = np.random.default_rng(seed)
    worst_sym = worst_scale = 0.0
    for _ in range(n_vectors):
        n = int(rng.integers(1, 200))
        p, q = rng.uniform(0.01, 10, n), rng.uniform(0.01, 10, n)
        a = float(rng.uniform(0.01, 100))
        worst_sym = max(worst_sym, abs(smape(p, q) - smape(q, p)) / max(smape(p, q), 1e-300))
        for fn in (mae, rmse):
            base = fn(p, q)
            worst_scale = max(worst_scale, abs(fn(a * p, a * q) - a * base) / (a * base))
    if worst_sym > 1e-12:
        failures.append(f"smape symmetry {_fmt(worst_sym)}")
    if worst_scale > 1e-9:
        failures.append(f"scale equivariance {_fmt(worst_scale)}")
    detail = f"4 unit examples, {n_vectors} random vectors (symmetry {_fmt(worst_sym)}, scale {_fmt(worst_scale)})"
    return not failures, detail + (f"; failed: {', '.join(failures)}" if failures else "")


# 5 ------------------------------------------------------------------------


def load_real_table():
    """Station 41008 for the full study period, or the reason it is missing."""
    try:
        return ndbc.load_station(REAL_STATION, REAL_YEARS, fetch=True, timeout=20.0), None
    except Exception as exc:  # any ingest failure makes the check unverifiable
        text = str(exc)
        cause = re.search(r"\[Errno [^\]]*\] ([^\"')]+)", text)
        reason = text.split(" failed: ")[0] + (f" failed: {cause.group(1)}" if cause else "")
        return None, f"{type(exc).__name__}: {reason[:200]}"


def check_preprocessing(seed=5):
    """Interpolation exactness, angle table, scaler round trip, WVHT bounds."""
    rng = np.random.default_rng(seed)
    failures = []
    worst_line = 0.0
    for _ in range(200):
        n = int(rng.integers(3, 60))
        pos = np.cumsum(rng.uniform(0.5, 3.0, n))
        line = rng.uniform(-100, 100) + rng.uniform(-50, 50) * pos
        col = line.copy()
        holes = rng.random(n) < 0.4
        holes[0] = holes[-1] = False
        col[holes] = np.nan
        out = pp.interpolate_missing(col, pos)
        worst_line = max(worst_line, float(np.max(np.abs(out - line) / np.maximum(1.0, np.abs(line)))))
        if not np.array_equal(out[~holes], line[~holes]):
            failures.append("valid values changed")
    if worst_line > 1e-10:
        failures.append(f"linear exactness {_fmt(worst_line)}")

    table = [(0.0, (0.0, 0)), (180.0, (1.0, 0)), (270.0, (0.5, 1))]
    for x, (v, s) in table:
        enc = pp.encode_angle(x, 360.0)
        if abs(enc.x_new - v) > 1e-12 or enc.x_sign != s:
            failures.append(f"encode {x}")
    for (v, s), x in [((0.5, 1), 270.0), ((1.0, 0), 180.0), ((0.0, 0), 0.0)]:
        if abs(pp.decode_angle(AngleEncoding(v, s), 360.0) - x) > 1e-9:
            failures.append(f"decode {(v, s)}")

    params = ScalerParams({"WVHT": 0.20}, {"WVHT": 4.54})
    x = rng.uniform(0.0, 10.0, size=100_000)
    round_trip = float(np.max(np.abs(pp.invert_scaler(pp.scale_values(x, "WVHT", params), "WVHT", params) - x)))
    if round_trip >= 1e-12:
        failures.append(f"round trip {_fmt(round_trip)}")

    real, why = load_real_table()
    if real is None:
        failures.append(f"41008 data unavailable ({why})")
        bounds = "bounds unverified"
    else:
        wvht = real.columns["WVHT"]
        lo, hi = float(np.nanmin(wvht)), float(np.nanmax(wvht))
        bounds = f"WVHT range [{lo:.2f}, {hi:.2f}] within [{WVHT_BOUNDS[0]}, {WVHT_BOUNDS[1]}]"
        if not (lo >= WVHT_BOUNDS[0] and hi <= WVHT_BOUNDS[1]):
            failures.append(f"WVHT range [{lo:.2f}, {hi:.2f}]")
    detail = (f"linear exactness {_fmt(worst_line)}, 6 angle cases, round trip {_fmt(round_trip)} (< 1e-12), {bounds}")
    return not failures, detail + (f"; failed: {', '.join(failures)}" if failures else "")


# 6 ------------------------------------------------------------------------


def check_desk(seed=DESK_SEED, budget=600.0):
    """Baseline on one synthetic year: R^2 and persistence MAE."""
    t0 = time.perf_counter()
    res = E.run_pipeline(E.desk_config(seed=seed))
    elapsed = time.perf_counter() - t0
    m, p = res.metrics, res.persistence
    ok = m.r2 >= 0.9 and m.mae < p.mae and elapsed < budget
    return ok, (
        f"synthetic seed {seed}: R2 {m.r2:.4f} (>= 0.9), MAE {m.mae:.4f} vs persistence {p.mae:.4f}, "
        f"{elapsed:.0f} s (< {budget:.0f} s)"
    )


# 7 ------------------------------------------------------------------------


def check_real(seeds=REAL_SEEDS, budget=7200.0):
    """Five-variant suite on 41008, trained 2019-2021 and tested on 2022."""
    table, why = load_real_table()
    if table is None:
        return False, f"41008 data unavailable ({why}); MAE, R2 and ablation ordering unverified"
    t0 = time.perf_counter()
    base_cfg = E.PipelineConfig(station=REAL_STATION, years=REAL_YEARS, split="2022-01-01T00:00:00")
    ordered, lines = 0, []
    first = None
    with tempfile.TemporaryDirectory() as cache:
        for s in seeds:
            cfg = base_cfg.replace(model=dataclasses.replace(base_cfg.model, seed=s))
            report, _ = E.run_ablation_suite(cfg, table=table, cache_dir=Path(cache))
            base = report.metrics["Baseline"]
            first = first or base
            wins = all(base.mae < report.metrics[v].mae for v in E.ABLATION_VARIANTS[1:])
            ordered += wins
            lines.append(f"seed {s}: MAE {base.mae:.4f} R2 {base.r2:.4f} ordered={wins}")
    elapsed = time.perf_counter() - t0
    ok = first.mae <= REAL_MAE_LIMIT and first.r2 >= REAL_R2_LIMIT and ordered >= 2 and elapsed <= budget
    return ok, (
        f"seed {seeds[0]} MAE {first.mae:.4f} (<= {REAL_MAE_LIMIT}), R2 {first.r2:.4f} (>= {REAL_R2_LIMIT}), "
        f"ordering on {ordered}/{len(seeds)} seeds (>= 2), {elapsed:.0f} s (<= {budget:.0f} s); " + "; ".join(lines)
    )


# 8 ------------------------------------------------------------------------

EMITTED = ("comparison.json", "manifest.json", "config.json")
PER_RUN = ("metrics.csv", "report.json", "predictions.csv", "forecasts.csv", "model.bin")


def determinism_config():
    return E.desk_config(seed=3).replace(
        split="2019-02-15T00:00:00",
        synthetic=E.SyntheticConfig(hours=24 * 60, seed=3),
        model=ModelConfig(channels=8, hidden=8, max_epochs=3, patience=3, seed=3),
    )


def check_determinism(variants=E.VARIANTS):
    """Two runs of every variant with the same config produce identical files."""
    cfg = determinism_config()
    with tempfile.TemporaryDirectory() as root:
        root = Path(root)
        for d in ("a", "b"):
            E.run_ablation_suite(cfg, variants, out_dir=root / d)
        names = list(EMITTED) + [f"{v}/{n}" for v in variants for n in PER_RUN]
        differing = [n for n in names if (root / "a" / n).read_bytes() != (root / "b" / n).read_bytes()]
    ok = not differing
    return ok, f"{len(names)} files over {len(variants)} variants compared byte for byte" + (
        f"; differing: {', '.join(differing)}" if differing else ""
    )


CRITERIA = [
    (1, "fft oracle", check_fft),
    (2, "stl identity and recovery", check_stl),
    (3, "gradient check", check_gradients),
    (4, "metric formulas", check_metrics),
    (5, "preprocessing", check_preprocessing),
    (6, "desk end-to-end", check_desk),
    (7, "real-data reproduction", check_real),
    (8, "determinism", check_determinism),
]


def summary_lines():
    return [
        f"ACCEPTANCE {n} {label}: {'PASS' if RESULTS[n][0] else 'FAIL'} ({RESULTS[n][1]})"
        for n, label, _ in CRITERIA
        if n in RESULTS
    ]


@pytest.mark.acceptance
@pytest.mark.parametrize("number, label, check", CRITERIA, ids=[f"criterion{n}" for n, _, _ in CRITERIA])
def test_criterion(number, label, check):
    passed, detail = check()
    RESULTS[number] = (passed, detail)
    assert passed, f"{label}: {detail}"


if __name__ == "__main__":
    for n, label, check in CRITERIA:
        try:
            RESULTS[n] = check()
        except Exception as exc:
            RESULTS[n] = (False, f"raised {type(exc).__name__}: {exc}")
        print(summary_lines()[-1], flush=True)
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
