"""Synthetic buoy-like data for offline end-to-end runs.

WVHT is a daily sinusoid on a slowly varying level with AR(1) noise and a
few injected spikes; the other ten features are loosely coupled to it. A
handful of cells are blanked and a short stretch of rows is removed so the
gap handling paths get exercised.
"""

from __future__ import annotations

import numpy as np

from .ndbc import FEATURES, TimeSeriesTable

SYNTHETIC_STATION = "synthetic"


def ar1(rng, n, phi, sigma):
    e = rng.normal(0.0, sigma, size=n)
    out = np.empty(n)
    out[0] = e[0] / np.sqrt(1 - phi**2)
    for i in range(1, n):
        out[i] = phi * out[i - 1] + e[i]
    return out


def generate(hours=2880, seed=0, start="2019-01-01T00:00:00", missing_rate=0.002, n_spikes=4, drop_rows=6):
    rng = np.random.default_rng(seed)
    t = np.arange(hours, dtype=float)
    daily = np.sin(2 * np.pi * t / 24.0)
    level = 1.2 + 0.25 * np.sin(2 * np.pi * t / (24.0 * 30)) + 0.0002 * t / 24.0
    wvht = level + 0.3 * daily + ar1(rng, hours, 0.9, 0.04)
    spikes = rng.choice(np.arange(48, hours - 48), size=n_spikes, replace=False)
    wvht[spikes] += rng.uniform(0.6, 1.0, size=n_spikes)
    wvht = np.clip(wvht, 0.2, None)

    wspd = np.clip(6.0 + 2.0 * (wvht - 1.2) + 1.5 * np.sin(2 * np.pi * (t - 3) / 24.0) + ar1(rng, hours, 0.8, 0.4), 0.0, None)
    cols = {
        "WVHT": wvht,
        "WSPD": wspd,
        "GST": wspd * 1.25 + np.abs(rng.normal(0.0, 0.3, size=hours)),
        "DPD": np.clip(8.0 + 1.5 * np.sin(2 * np.pi * t / (24.0 * 7)) + ar1(rng, hours, 0.95, 0.3), 3.0, None),
        "APD": np.clip(6.0 + 0.8 * np.sin(2 * np.pi * t / (24.0 * 7)) + ar1(rng, hours, 0.95, 0.2), 2.5, None),
        "WDIR": np.mod(120.0 + np.cumsum(rng.normal(0.0, 6.0, size=hours)), 360.0),
        "MWD": np.mod(160.0 + 60.0 * np.sin(2 * np.pi * t / (24.0 * 10)) + rng.normal(0.0, 8.0, size=hours), 360.0),
        "PRES": 1015.0 + 4.0 * np.sin(2 * np.pi * t / (24.0 * 5)) + 0.8 * np.sin(2 * np.pi * t / 12.0) + ar1(rng, hours, 0.97, 0.2),
        "ATMP": 20.0 + 2.5 * np.sin(2 * np.pi * (t - 14) / 24.0) + ar1(rng, hours, 0.95, 0.3),
        "WTMP": 22.0 + 0.4 * np.sin(2 * np.pi * (t - 16) / 24.0) + ar1(rng, hours, 0.99, 0.05),
    }
    cols["DEWP"] = cols["ATMP"] - 3.0 + ar1(rng, hours, 0.9, 0.3)
    for name in FEATURES:
        col = cols[name]
        blank = rng.random(hours) < missing_rate
        blank[0] = blank[-1] = False
        col[blank] = np.nan
    stamps = np.datetime64(start, "s") + (t.astype(np.int64) * 3600).astype("timedelta64[s]")
    keep = np.ones(hours, dtype=bool)
    if drop_rows:
        gap_at = hours // 3
        keep[gap_at : gap_at + drop_rows] = False
    return TimeSeriesTable(stamps[keep], {k: v[keep] for k, v in cols.items()})
