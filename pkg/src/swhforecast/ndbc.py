"""NDBC standard-meteorological (stdmet) ingestion.

Parses the annual historical text files published by the National Data Buoy
Center into a :class:`TimeSeriesTable`, caches downloads on disk, and reads
and writes the canonical CSV form used by the rest of the pipeline.
"""

from __future__ import annotations

import csv
import datetime as dt
import gzip
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from filelock import FileLock

log = logging.getLogger(__name__)

FEATURES = ("WDIR", "WSPD", "GST", "WVHT", "DPD", "APD", "MWD", "PRES", "ATMP", "WTMP", "DEWP")

# Per-column "missing" codes. 9999 is treated as missing in every column.
SENTINELS = {
    "WVHT": 99.0,
    "DPD": 99.0,
    "APD": 99.0,
    "WSPD": 99.0,
    "GST": 99.0,
    "WDIR": 999.0,
    "MWD": 999.0,
    "PRES": 999.0,
    "ATMP": 999.0,
    "WTMP": 999.0,
    "DEWP": 999.0,
}
UNIVERSAL_SENTINEL = 9999.0

# Older stdmet headers use different spellings.
_HEADER_ALIASES = {"YYYY": "YY", "WD": "WDIR", "BAR": "PRES"}

DEFAULT_ENDPOINT = (
    "https://www.ndbc.noaa.gov/view_text_file.php?"
    "filename={station}h{year}.txt.gz&dir=data/historical/stdmet/"
)
DATA_DIR_ENV = "SWHFORECAST_DATA_DIR"


class NdbcParseError(ValueError):
    """Raised for malformed stdmet input; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FetchError(RuntimeError):
    """HTTP failure while downloading a station file. Always retryable."""

    retryable = True

    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)


class CacheError(OSError):
    pass


@dataclass(frozen=True)
class StationMeta:
    station_id: str
    latitude: float
    longitude: float
    water_depth: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude out of range: {self.longitude}")
        if not self.water_depth > 0:
            raise ValueError(f"water depth must be positive: {self.water_depth}")


STATIONS = {
    "41008": StationMeta("41008", 31.400, -80.866, 16.0),
    "41047": StationMeta("41047", 27.557, -71.480, 5328.0),
}

# Full-period (2019-2022) WVHT statistics in meters: min, max, mean, std.
WVHT_STATS = {
    "41008": (0.20, 4.54, 1.13, 0.49),
    "41047": (0.49, 9.34, 1.63, 0.76),
}


@dataclass
class TimeSeriesTable:
    """Hourly rows of the 11 buoy features; missing cells are NaN."""

    timestamps: np.ndarray
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        if set(self.columns) != set(FEATURES):
            raise ValueError(f"columns must be exactly {FEATURES}, got {sorted(self.columns)}")
        self.columns = {
            name: np.asarray(self.columns[name], dtype=float) for name in FEATURES
        }
        n = len(self.timestamps)
        for name, col in self.columns.items():
            if col.shape != (n,):
                raise ValueError(f"column {name} has shape {col.shape}, expected ({n},)")
        if n > 1 and not np.all(np.diff(self.timestamps) > np.timedelta64(0, "s")):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.timestamps)

    @classmethod
    def empty(cls):
        return cls(np.array([], dtype="datetime64[s]"), {f: np.array([]) for f in FEATURES})

    def select(self, mask):
        return TimeSeriesTable(
            self.timestamps[mask], {k: v[mask] for k, v in self.columns.items()}
        )

    def equals(self, other):
        if not np.array_equal(self.timestamps, other.timestamps):
            return False
        return all(
            np.array_equal(self.columns[f], other.columns[f], equal_nan=True) for f in FEATURES
        )


def _parse_value(token, name, line_no):
    if token == "MM":
        return np.nan
    try:
        value = float(token)
    except ValueError:
        raise NdbcParseError(f"unparsable number {token!r} in column {name}", line_no) from None
    if value == UNIVERSAL_SENTINEL or value == SENTINELS.get(name):
        return np.nan
    return value


def _parse_header(line):
    names = line.lstrip("#").split()
    names = [_HEADER_ALIASES.get(n, n) for n in names]
    if names[:4] != ["YY", "MM", "DD", "hh"]:
        raise NdbcParseError(f"unrecognised header {line.strip()!r}", 1)
    return names


def parse_stdmet(raw_text):
    """Parse an NDBC stdmet text body into a :class:`TimeSeriesTable`.

    Sentinel codes become NaN. When several records fall within one hour
    (10-minute files), the record closest to the hour mark is kept and
    stamped with that hour.
    """
    lines = raw_text.splitlines()
    header = None
    records = []  # (record_time, values dict)
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if header is None:
                header = _parse_header(line)
            continue
        if header is None:
            # Pre-2007 files have an uncommented header row.
            if line.split()[0] in ("YY", "YYYY"):
                header = _parse_header(line)
                continue
            raise NdbcParseError("data row before header", line_no)
        tokens = line.split()
        if len(tokens) != len(header):
            raise NdbcParseError(
                f"expected {len(header)} columns, found {len(tokens)}", line_no
            )
        row = dict(zip(header, tokens))
        try:
            year = int(row["YY"])
            if year < 100:
                year += 1900
            stamp = dt.datetime(
                year, int(row["MM"]), int(row["DD"]), int(row["hh"]), int(row.get("mm", 0))
            )
        except ValueError as exc:
            raise NdbcParseError(f"bad timestamp: {exc}", line_no) from None
        values = {
            name: (_parse_value(row[name], name, line_no) if name in row else np.nan)
            for name in FEATURES
        }
        if records and stamp <= records[-1][0]:
            raise NdbcParseError(
                f"non-monotone timestamp {stamp.isoformat()} after {records[-1][0].isoformat()}",
                line_no,
            )
        records.append((stamp, values))

    if not records:
        return TimeSeriesTable.empty()

    hourly = {}  # hour mark -> (offset seconds, values)
    for stamp, values in records:
        hour = (stamp + dt.timedelta(minutes=30)).replace(minute=0, second=0)
        offset = abs((stamp - hour).total_seconds())
        if hour not in hourly or offset < hourly[hour][0]:
            hourly[hour] = (offset, values)
    hours = sorted(hourly)
    timestamps = np.array(hours, dtype="datetime64[s]")
    columns = {f: np.array([hourly[h][1][f] for h in hours], dtype=float) for f in FEATURES}
    return TimeSeriesTable(timestamps, columns)


def concat_years(tables):
    """Merge per-year tables into one chronologically sorted table.

    Gaps between tables stay as absent rows. Overlapping time ranges raise.
    """
    tables = [t for t in tables if len(t)]
    if not tables:
        return TimeSeriesTable.empty()
    tables = sorted(tables, key=lambda t: t.timestamps[0])
    for prev, nxt in zip(tables, tables[1:]):
        if nxt.timestamps[0] <= prev.timestamps[-1]:
            raise ValueError(
                f"overlapping tables: {prev.timestamps[0]}..{prev.timestamps[-1]} "
                f"and {nxt.timestamps[0]}..{nxt.timestamps[-1]}"
            )
    return TimeSeriesTable(
        np.concatenate([t.timestamps for t in tables]),
        {f: np.concatenate([t.columns[f] for t in tables]) for f in FEATURES},
    )


def default_data_dir():
    return Path(os.environ.get(DATA_DIR_ENV, Path.home() / ".cache" / "swhforecast"))


def cache_path(station_id, year, data_dir=None):
    data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
    return data_dir / f"{station_id}h{year}.txt"


def fetch_station_year(station_id, year, endpoint=DEFAULT_ENDPOINT, data_dir=None, session=None, timeout=30.0):
    """Return the raw stdmet file for one station-year, downloading on a cache miss.

    ``session`` is anything with a ``requests``-style ``get``; the default is
    a fresh :class:`requests.Session`.
    """
    current = dt.date.today().year
    if not 1970 <= int(year) <= current:
        raise ValueError(f"year must be in [1970, {current}], got {year}")
    path = cache_path(station_id, year, data_dir)
    if path.exists():
        return path.read_text()

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CacheError(f"cannot create data dir {path.parent}: {exc}") from exc

    with FileLock(str(path) + ".lock"):
        if path.exists():
            return path.read_text()
        if session is None:
            import requests

            session = requests.Session()
        url = endpoint.format(station=station_id, year=year)
        log.info("fetching %s", url)
        try:
            resp = session.get(url, timeout=timeout)
        except Exception as exc:  # connection errors surface as retryable
            raise FetchError(f"request to {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise FetchError(f"HTTP {resp.status_code} for {url}", status=resp.status_code)
        body = resp.content
        if body[:2] == b"\x1f\x8b":
            body = gzip.decompress(body)
        text = body.decode("ascii", errors="replace")
        if not text.startswith("#"):
            raise FetchError(f"unexpected response body from {url}", status=resp.status_code)
        tmp = path.with_suffix(".tmp")
        try:
            tmp.write_text(text)
            tmp.replace(path)
        except OSError as exc:
            raise CacheError(f"cannot write cache file {path}: {exc}") from exc
    return text


def load_station(station_id, years, data_dir=None, fetch=True, **fetch_kwargs):
    """Parse and concatenate the given years for a station."""
    tables = []
    for year in years:
        path = cache_path(station_id, year, data_dir)
        if path.exists():
            text = path.read_text()
        elif fetch:
            text = fetch_station_year(station_id, year, data_dir=data_dir, **fetch_kwargs)
        else:
            raise FileNotFoundError(f"no local stdmet file for {station_id} {year}: {path}")
        tables.append(parse_stdmet(text))
    return concat_years(tables)


def _format_ts(ts):
    return str(np.datetime64(ts, "s")) + "Z"


def write_csv(table, path_or_buf):
    """Write the canonical CSV: ``timestamp,WDIR,...,DEWP``; empty cell = missing."""
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", *FEATURES])
        for i, ts in enumerate(table.timestamps):
            cells = []
            for f in FEATURES:
                v = table.columns[f][i]
                cells.append("" if np.isnan(v) else repr(float(v)))
            writer.writerow([_format_ts(ts), *cells])
    finally:
        if own:
            fh.close()


def read_csv(path_or_buf):
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, newline="") if own else path_or_buf
    try:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["timestamp", *FEATURES]:
            raise ValueError(f"unexpected CSV header: {header}")
        stamps, rows = [], []
        for row in reader:
            stamps.append(np.datetime64(row[0].rstrip("Z"), "s"))
            rows.append([float(c) if c else np.nan for c in row[1:]])
    finally:
        if own:
            fh.close()
    data = np.array(rows, dtype=float).reshape(len(rows), len(FEATURES))
    return TimeSeriesTable(
        np.array(stamps, dtype="datetime64[s]"), {f: data[:, j] for j, f in enumerate(FEATURES)}
    )


def table_to_csv_string(table):
    buf = io.StringIO()
    write_csv(table, buf)
    return buf.getvalue()
