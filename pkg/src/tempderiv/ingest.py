"""Loading and cleaning of daily station weather records.

Raw CSV rows become :class:`DailyObservation` records; gaps are filled with a
day-index nearest-neighbour rule and the min/max temperatures are averaged
into a :class:`DailySeries` on a 365-day calendar (February 29 dropped).
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

MISSING_MARKERS = {"", "na", "nan"}
DAYS_PER_YEAR = 365
DEFAULT_SCHEMA = {"date": "date", "t_min": "t_min", "t_max": "t_max"}

# month lengths of the 365-day calendar and the day-of-year where each starts
MONTH_LENGTHS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
MONTH_STARTS = np.concatenate([[0], np.cumsum(MONTH_LENGTHS)]).astype(float)


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class DailyObservation:
    date: dt.date
    t_min: float = math.nan
    t_max: float = math.nan
    extras: Mapping[str, float] = field(default_factory=dict)


def is_leap_day(d: dt.date) -> bool:
    return d.month == 2 and d.day == 29


def day_of_year_365(d: dt.date) -> int:
    """Zero-based day of year on the 365-day calendar (Feb 29 has no slot)."""
    if is_leap_day(d):
        raise IngestError(f"{d} has no slot on the 365-day calendar")
    return int(MONTH_STARTS[d.month - 1]) + d.day - 1


def month_of_day(t) -> np.ndarray:
    """Calendar month index 0..11 for day index ``t`` (t=0 is January 1)."""
    doy = np.mod(np.floor(np.asarray(t, dtype=float)), DAYS_PER_YEAR)
    return np.searchsorted(MONTH_STARTS, doy, side="right") - 1


@dataclass
class DailySeries:
    """Gap-free daily average temperatures on the 365-day calendar.

    ``day_index`` counts days from January 1 of the start year, skipping
    leap days, so seasonal phase and calendar month are read off directly.
    """

    station_id: str
    start_date: dt.date
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise IngestError("series values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise IngestError(f"series {self.station_id!r} has missing or non-finite values")
        if is_leap_day(self.start_date):
            raise IngestError("a series cannot start on February 29")

    def __len__(self):
        return len(self.values)

    @property
    def offset(self) -> int:
        return day_of_year_365(self.start_date)

    @property
    def day_index(self) -> np.ndarray:
        return self.offset + np.arange(len(self.values), dtype=float)

    @property
    def dates(self) -> list[dt.date]:
        out, d = [], self.start_date
        one = dt.timedelta(days=1)
        while len(out) < len(self.values):
            if not is_leap_day(d):
                out.append(d)
            d += one
        return out

    @property
    def months(self) -> np.ndarray:
        return month_of_day(self.day_index)


def _parse_number(cell: str | None) -> float:
    if cell is None or cell.strip().lower() in MISSING_MARKERS:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        return math.nan


def load_csv(path, schema: Mapping[str, object] | None = None) -> list[DailyObservation]:
    """Read a header-row CSV into observations.

    ``schema`` maps ``date``, ``t_min``, ``t_max`` to CSV column names and may
    carry an ``extras`` mapping ``{feature: column}``. Numeric cells that do
    not parse are treated as missing; bad, duplicate or out-of-order dates are
    errors naming the (1-based, header excluded) row number.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else {**DEFAULT_SCHEMA, **schema})
    extras = dict(schema.pop("extras", {}) or {})
    observations: list[DailyObservation] = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key in ("date", "t_min", "t_max"):
            if schema[key] not in header:
                raise IngestError(f"column {schema[key]!r} (for {key}) not in header {header}")
        for name, col in extras.items():
            if col not in header:
                raise IngestError(f"column {col!r} (for {name}) not in header {header}")
        for row_no, row in enumerate(reader, start=1):
            raw = (row[schema["date"]] or "").strip()
            try:
                date = dt.date.fromisoformat(raw)
            except ValueError:
                raise IngestError(f"malformed date {raw!r} at row {row_no}") from None
            if observations:
                prev = observations[-1].date
                if date == prev:
                    raise IngestError(f"duplicate date {date} at row {row_no}")
                if date < prev:
                    raise IngestError(f"non-monotone date at row {row_no}")
            t_min = _parse_number(row[schema["t_min"]])
            t_max = _parse_number(row[schema["t_max"]])
            if t_min > t_max:
                raise IngestError(f"t_min > t_max at row {row_no}")
            observations.append(
                DailyObservation(date, t_min, t_max,
                                 {name: _parse_number(row[col]) for name, col in extras.items()})
            )
    return observations


def reindex_daily(obs: Sequence[DailyObservation]) -> list[DailyObservation]:
    """Insert all-missing rows for calendar days absent from ``obs``."""
    if not obs:
        return []
    by_date = {o.date: o for o in obs}
    names = sorted({k for o in obs for k in o.extras})
    out, d, one = [], obs[0].date, dt.timedelta(days=1)
    while d <= obs[-1].date:
        out.append(by_date.get(d) or DailyObservation(d, extras={k: math.nan for k in names}))
        d += one
    return out


def impute_knn(series, k: int = 5) -> np.ndarray:
    """Fill missing entries with the mean of the ``k`` nearest observed days.

    Distance is the absolute index difference; equal distances prefer the
    earlier day. Observed values are returned untouched.
    """
    x = np.asarray(series, dtype=float).copy()
    if k < 1:
        raise IngestError("k must be a positive integer")
    missing = ~np.isfinite(x)
    observed = np.flatnonzero(~missing)
    if observed.size == 0:
        raise IngestError("cannot impute an all-missing series")
    if observed.size < k:
        raise IngestError(f"need at least k={k} observed values, have {observed.size}")
    vals = x[observed]
    for i in np.flatnonzero(missing):
        dist = np.abs(observed - i)
        order = np.lexsort((observed, dist))[:k]
        x[i] = vals[order].mean()
    return x


def impute_observations(obs: Sequence[DailyObservation], k: int = 5) -> list[DailyObservation]:
    """Per-variable KNN imputation over a reindexed daily record."""
    obs = reindex_daily(obs)
    if not obs:
        return []
    t_min = impute_knn([o.t_min for o in obs], k)
    t_max = impute_knn([o.t_max for o in obs], k)
    # imputed min/max are filled independently and may cross
    lo, hi = np.minimum(t_min, t_max), np.maximum(t_min, t_max)
    names = sorted({n for o in obs for n in o.extras})
    extras = {}
    for n in names:
        col = [o.extras.get(n, math.nan) for o in obs]
        extras[n] = impute_knn(col, k) if np.isfinite(col).any() else np.asarray(col)
    return [
        DailyObservation(o.date, float(lo[i]), float(hi[i]),
                         {n: float(extras[n][i]) for n in names})
        for i, o in enumerate(obs)
    ]


def to_daily_average(obs: Sequence[DailyObservation], station_id: str = "station") -> DailySeries:
    kept = [o for o in obs if not is_leap_day(o.date)]
    if not kept:
        raise IngestError("no observations")
    for prev, cur in zip(kept, kept[1:]):
        gap = (cur.date - prev.date).days
        if gap != 1 and not (gap == 2 and is_leap_day(prev.date + dt.timedelta(days=1))):
            raise IngestError(f"gap between {prev.date} and {cur.date}; reindex and impute first")
    values = np.array([(o.t_min + o.t_max) / 2.0 for o in kept])
    if not np.all(np.isfinite(values)):
        bad = [o.date.isoformat() for o in kept if not np.isfinite((o.t_min + o.t_max) / 2.0)]
        raise IngestError(f"missing temperatures on {bad[:5]}; impute first")
    return DailySeries(station_id, kept[0].date, values)


def prepare_series(obs: Sequence[DailyObservation], k: int = 5,
                   station_id: str = "station") -> DailySeries:
    """Reindex, impute and average raw observations in one call."""
    return to_daily_average(impute_observations(obs, k), station_id)


@dataclass(frozen=True)
class MinMaxScaling:
    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mins) / (self.maxs - self.mins)

    def inverse(self, Z):
        return np.asarray(Z, dtype=float) * (self.maxs - self.mins) + self.mins


def min_max_normalize(matrix, columns: Sequence[str] | None = None):
    """Scale each column to [0, 1]; returns ``(normalized, scaling)``."""
    X = np.asarray(matrix, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    mins, maxs = X.min(axis=0), X.max(axis=0)
    for j in np.flatnonzero(~(maxs > mins)):
        name = columns[j] if columns is not None else j
        raise IngestError(f"constant column {name!r} cannot be normalized")
    scaling = MinMaxScaling(mins, maxs)
    return scaling.transform(X), scaling


def yearly_means(dates: Sequence[dt.date], values) -> dict[int, float]:
    """Arithmetic mean of daily values per calendar year."""
    values = np.asarray(values, dtype=float)
    years = np.array([d.year for d in dates])
    return {int(y): float(values[years == y].mean()) for y in np.unique(years)}


def write_series_csv(series: DailySeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "temperature"])
        for d, v in zip(series.dates, series.values):
            w.writerow([d.isoformat(), repr(float(v))])


def read_series_csv(path, station_id: str | None = None) -> DailySeries:
    """Read a ``date,temperature`` CSV written by :func:`write_series_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows or "temperature" not in rows[0]:
        raise IngestError(f"{path}: expected columns date,temperature")
    start = dt.date.fromisoformat(rows[0]["date"])
    return DailySeries(station_id or Path(path).stem, start,
                       np.array([_parse_number(r["temperature"]) for r in rows]))
