"""Seasonal mean S(t) = a + b t + c sin(wt) + d cos(wt), w = 2 pi / 365.

Fitting is ordinary least squares on the four regressors; the amplitude/phase
form ``A + B t + C sin(wt + phase)`` is carried alongside.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .ingest import DAYS_PER_YEAR, DailySeries

OMEGA = 2.0 * math.pi / DAYS_PER_YEAR
MA_WINDOW = DAYS_PER_YEAR


class SeasonalFitError(ValueError):
    pass


def _wrap_phase(phase: float) -> float:
    """Reduce an angle to (-pi, pi]."""
    p = math.remainder(phase, 2.0 * math.pi)
    return math.pi if p == -math.pi else p


@dataclass(frozen=True)
class SeasonalParams:
    a: float
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0

    @classmethod
    def from_amplitude_phase(cls, A: float, B: float, C: float, phase: float) -> "SeasonalParams":
        """Build from ``A + B t + C sin(wt + phase)``.

        The phase is taken in radians modulo 2*pi, so out-of-range values such
        as -67.71 are accepted as-is.
        """
        if C < 0:
            raise ValueError("amplitude C must be non-negative")
        return cls(A, B, C * math.cos(phase), C * math.sin(phase))

    @property
    def amplitude(self) -> float:
        return math.hypot(self.c, self.d)

    @property
    def phase(self) -> float:
        return _wrap_phase(math.atan2(self.d, self.c))

    def __call__(self, t):
        return eval_seasonal(self, t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return self.b + OMEGA * (self.c * np.cos(OMEGA * t) - self.d * np.sin(OMEGA * t))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


def eval_seasonal(p: SeasonalParams, t):
    t = np.asarray(t, dtype=float)
    return p.a + p.b * t + p.c * np.sin(OMEGA * t) + p.d * np.cos(OMEGA * t)


def eval_amplitude_phase(A, B, C, phase, t):
    t = np.asarray(t, dtype=float)
    return A + B * t + C * np.sin(OMEGA * t + phase)


def transform_params(p: SeasonalParams) -> tuple[float, float, float, float]:
    """Return ``(A, B, C, phase)`` with the phase from a two-argument arctangent."""
    return p.a, p.b, p.amplitude, p.phase


def design_matrix(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.column_stack([np.ones_like(t), t, np.sin(OMEGA * t), np.cos(OMEGA * t)])


@dataclass(frozen=True)
class SeasonalFit:
    params: SeasonalParams
    rmse: float
    r2: float
    n: int


def fit_seasonal(series: DailySeries | np.ndarray, t=None) -> SeasonalFit:
    """Least-squares fit of the seasonal mean.

    Accepts a :class:`DailySeries` (its ``day_index`` supplies ``t``) or a raw
    array with an explicit ``t``. The 4x4 normal equations are solved
    directly; a near-singular system raises :class:`SeasonalFitError`.
    """
    if isinstance(series, DailySeries):
        y, t = series.values, series.day_index
    else:
        y = np.asarray(series, dtype=float)
        t = np.arange(len(y), dtype=float) if t is None else np.asarray(t, dtype=float)
    if len(y) < 2 * DAYS_PER_YEAR:
        raise SeasonalFitError(f"need at least {2 * DAYS_PER_YEAR} days, got {len(y)}")
    # centre and scale t so the normal matrix is well conditioned
    t0, ts = t.mean(), max(np.ptp(t), 1.0)
    X = design_matrix(t)
    Xs = X.copy()
    Xs[:, 1] = (t - t0) / ts
    G = Xs.T @ Xs
    if np.linalg.cond(G) > 1e12:
        raise SeasonalFitError("singular normal matrix")
    coef = np.linalg.solve(G, Xs.T @ y)
    b = coef[1] / ts
    a = coef[0] - b * t0
    params = SeasonalParams(float(a), float(b), float(coef[2]), float(coef[3]))
    resid = y - X @ np.array([a, b, coef[2], coef[3]])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return SeasonalFit(params, rmse, r2, len(y))


def deseasonalize(series: DailySeries, params: SeasonalParams) -> np.ndarray:
    return series.values - eval_seasonal(params, series.day_index)


@dataclass(frozen=True)
class Decomposition:
    """Additive split; ``trend`` and ``residual`` are NaN where the centred
    moving average is undefined (``defined`` is False there)."""

    observed: np.ndarray
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.trend)


def decompose(series: DailySeries | np.ndarray, offset: int | None = None) -> Decomposition:
    """Classical additive decomposition by a centred 365-day moving average.

    The window is odd, so no 2x averaging is needed. Seasonal indices are the
    per-day-of-year means of the detrended series, shifted to sum to zero.
    """
    if isinstance(series, DailySeries):
        y, offset = series.values, series.offset
    else:
        y = np.asarray(series, dtype=float)
        offset = offset or 0
    n = len(y)
    if n < 2 * DAYS_PER_YEAR:
        raise SeasonalFitError(f"need at least {2 * DAYS_PER_YEAR} days, got {n}")
    half = MA_WINDOW // 2
    csum = np.concatenate([[0.0], np.cumsum(y)])
    trend = np.full(n, np.nan)
    trend[half:n - half] = (csum[MA_WINDOW:] - csum[:-MA_WINDOW]) / MA_WINDOW
    detrended = y - trend
    doy = (offset + np.arange(n)) % DAYS_PER_YEAR
    ok = np.isfinite(detrended)
    sums = np.bincount(doy[ok], weights=detrended[ok], minlength=DAYS_PER_YEAR)
    counts = np.bincount(doy[ok], minlength=DAYS_PER_YEAR)
    index = sums / counts
    index -= index.mean()
    seasonal = index[doy]
    return Decomposition(y.copy(), trend, seasonal, y - trend - seasonal)


def write_decomposition_csv(dec: Decomposition, dates, path) -> None:
    """Plot-ready export; undefined trend/residual cells are left empty."""
    def cell(v):
        return repr(float(v)) if np.isfinite(v) else ""

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "observed", "trend", "seasonal", "residual"])
        for i, d in enumerate(dates):
            w.writerow([d.isoformat(), cell(dec.observed[i]), cell(dec.trend[i]),
                        cell(dec.seasonal[i]), cell(dec.residual[i])])
