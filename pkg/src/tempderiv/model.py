"""Temperature dynamics dT = dS + beta(t)(T - S)dt + sigma T dB.

Time is measured in days with t = 0 on January 1 of the reference year;
beta(t) is piecewise constant per calendar month (365-day calendar) so every
integral of beta is exact. Under the pricing measure dB = dW + lam dt with a
constant market price of risk ``lam``.

Two path dynamics are available. ``"unfrozen"`` uses the state-dependent
volatility sigma*T_t. ``"frozen"`` replaces it by sigma*Tbar_u, where Tbar is
the lam = 0 conditional mean from an anchor state; this linear SDE is the one
the closed-form prices solve exactly.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .ingest import DAYS_PER_YEAR, MONTH_STARTS, DailySeries, month_of_day
from .quadrature import SimpsonGrid
from .seasonal import SeasonalParams, eval_seasonal

BLOCK_SIZE = 4096
INNER_STEP = 0.25
# largest |rate| * step allowed when integrating against exp(rate * u)
KERNEL_RESOLUTION = 0.05
MEASURES = ("P", "Q")
DYNAMICS = ("unfrozen", "frozen")


class CalibrationError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


def worker_count() -> int:
    """Thread cap from ``TEMPDERIV_THREADS`` (default 1)."""
    raw = os.environ.get("TEMPDERIV_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _expm1_over(x: np.ndarray) -> np.ndarray:
    """expm1(x)/x with the x -> 0 limit."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.expm1(x[nz]) / x[nz]
    return out


class BetaCurve:
    """Monthly piecewise-constant mean-reversion speed and its exact integral."""

    def __init__(self, monthly):
        v = np.asarray(monthly, dtype=float)
        if v.shape == ():
            v = np.full(12, float(v))
        if v.shape != (12,):
            raise ValueError("beta needs 12 monthly values")
        if not np.all(np.isfinite(v)):
            raise ValueError("beta values must be finite")
        self.values = v
        self._knots = np.concatenate([[0.0], np.cumsum(v * np.diff(MONTH_STARTS))])
        self.year_integral = float(self._knots[-1])

    def __repr__(self):
        return f"BetaCurve({self.values.tolist()})"

    def __eq__(self, other):
        return isinstance(other, BetaCurve) and np.array_equal(self.values, other.values)

    def __add__(self, other: "BetaCurve") -> "BetaCurve":
        return BetaCurve(self.values + other.values)

    def scaled(self, k: float) -> "BetaCurve":
        return BetaCurve(k * self.values)

    def __call__(self, t):
        return self.values[month_of_day(t)]

    def integral(self, t):
        """B(t) = int_0^t beta(s) ds."""
        t = np.asarray(t, dtype=float)
        years = np.floor(t / DAYS_PER_YEAR)
        r = t - years * DAYS_PER_YEAR
        return years * self.year_integral + np.interp(r, MONTH_STARTS, self._knots)

    def breakpoints(self, a: float, b: float) -> np.ndarray:
        """Month boundaries strictly inside (a, b)."""
        y0, y1 = int(math.floor(a / DAYS_PER_YEAR)), int(math.floor(b / DAYS_PER_YEAR))
        pts = (np.arange(y0, y1 + 1)[:, None] * DAYS_PER_YEAR + MONTH_STARTS[None, :-1]).ravel()
        return pts[(pts > a) & (pts < b)]

    def exp_integral(self, u, a, b):
        """int_a^b exp(B(x) - B(u)) dx, exact; ``u``/``a``/``b`` broadcast."""
        u, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (u, a, b)))
        out = np.zeros(u.shape)
        if u.size == 0:
            return out
        lo_all, hi_all = float(a.min()), float(b.max())
        if hi_all <= lo_all:
            return out
        edges = np.concatenate([[lo_all], self.breakpoints(lo_all, hi_all), [hi_all]])
        Bu = self.integral(u)
        for lo, hi in zip(edges[:-1], edges[1:]):
            beta = float(self(0.5 * (lo + hi)))
            s_lo, s_hi = np.maximum(a, lo), np.minimum(b, hi)
            length = s_hi - s_lo
            m = length > 0
            if not m.any():
                continue
            out[m] += np.exp(self.integral(s_lo[m]) - Bu[m]) * length[m] * _expm1_over(beta * length[m])
        return out


@dataclass
class ModelParams:
    seasonal: SeasonalParams
    beta: BetaCurve
    sigma: float
    lam: float = 0.0
    station_id: str = "station"

    def __post_init__(self):
        if not isinstance(self.beta, BetaCurve):
            self.beta = BetaCurve(self.beta)
        if not np.all(self.beta.values < 0):
            raise ValueError("every monthly beta must be negative")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be finite and non-negative")
        if not math.isfinite(self.lam):
            raise ValueError("lambda must be finite")

    def S(self, t):
        return eval_seasonal(self.seasonal, t)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "station_id": self.station_id,
            "seasonal": self.seasonal.to_dict(),
            "beta": self.beta.values.tolist(),
            "sigma": self.sigma,
            "lambda": self.lam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(SeasonalParams(**d["seasonal"]), BetaCurve(d["beta"]), float(d["sigma"]),
                   float(d.get("lambda", 0.0)), d.get("station_id", "station"))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class FrozenCurve:
    """lam = 0 conditional mean Tbar(u) from the anchor state (t0, T0)."""

    params: ModelParams
    t0: float
    T0: float

    def __call__(self, u):
        p = self.params
        u = np.asarray(u, dtype=float)
        return p.S(u) + (self.T0 - p.S(self.t0)) * np.exp(p.beta.integral(u) - p.beta.integral(self.t0))

    def vol(self, u):
        return self.params.sigma * self(u)


def kernel_step(h_max: float, rate_abs: float) -> float:
    """Simpson step for an integrand varying like exp(rate * u).

    Capped at ``h_max``; fast kernels get KERNEL_RESOLUTION / |rate| so the
    relative panel error stays near 1e-8 even for very stiff mean reversion.
    """
    return min(h_max, KERNEL_RESOLUTION / rate_abs) if rate_abs > 0 else h_max


def kernel_accumulate(weight: Callable, rate: BetaCurve, s: float, xs, h_max: float = INNER_STEP):
    """``int_s^x weight(u) exp(R(x) - R(u)) du`` for each sorted ``x`` in ``xs``.

    Uses the semigroup identity acc(x') = e^{R(x')-R(x)} acc(x) + panel term, so
    only one Simpson pass over [s, max xs] is needed. Panels are split at the
    month breakpoints of ``rate``.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if xs.size == 0:
        return xs.copy()
    if np.any(np.diff(xs) < 0) or xs[0] < s:
        raise ValueError("xs must be sorted and >= s")
    nodes = np.unique(np.concatenate([[s], xs, rate.breakpoints(s, xs[-1])]))
    Rn = rate.integral(nodes)
    acc = np.zeros(len(nodes))
    for i in range(len(nodes) - 1):
        lo, hi = nodes[i], nodes[i + 1]
        grid = SimpsonGrid(lo, hi, kernel_step(h_max, abs(float(rate(0.5 * (lo + hi))))))
        panel = grid.integrate(weight(grid.nodes) * np.exp(Rn[i + 1] - rate.integral(grid.nodes)))
        acc[i + 1] = np.exp(Rn[i + 1] - Rn[i]) * acc[i] + panel
    return acc[np.searchsorted(nodes, xs)]


def lambda_drift(params: ModelParams, curve: FrozenCurve, s: float, xs, h_max=INNER_STEP):
    """int_s^x sigma*lam*Tbar_u e^{B(x)-B(u)} du (zero when lam or sigma is 0)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if params.lam == 0 or params.sigma == 0:
        return np.zeros(xs.shape)
    k = params.sigma * params.lam
    return kernel_accumulate(lambda u: k * curve(u), params.beta, s, xs, h_max)


def conditional_variance(params: ModelParams, curve: FrozenCurve, s: float, xs, h_max=INNER_STEP):
    """Psi^2(s, x) = int_s^x sigma^2 Tbar_u^2 e^{2(B(x)-B(u))} du."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if params.sigma == 0:
        return np.zeros(xs.shape)
    s2 = params.sigma ** 2
    return kernel_accumulate(lambda u: s2 * curve(u) ** 2, params.beta.scaled(2.0), s, xs, h_max)


def explicit_solution_mean(params: ModelParams, t: float, x, T_t: float, measure: str = "Q",
                           anchor: FrozenCurve | None = None):
    """Conditional mean of T_x given T_t.

    ``S_x + (T_t - S_t) e^{B(x)-B(t)}`` plus, under ``"Q"``, the market price of
    risk drift along the frozen curve (anchored at (t, T_t) unless given).
    """
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < t):
        raise ValueError("x must be >= t")
    B = params.beta.integral
    out = params.S(xs) + (T_t - params.S(t)) * np.exp(B(xs) - B(t))
    if measure == "Q":
        curve = anchor or FrozenCurve(params, t, T_t)
        order = np.argsort(xs, kind="stable")
        drift = np.empty_like(xs)
        drift[order] = lambda_drift(params, curve, t, xs[order])
        out = out + drift
    return float(out[0]) if scalar else out


# --- calibration -------------------------------------------------------------

def calibrate(series: DailySeries, seasonal: SeasonalParams, lam: float = 0.0,
              min_obs: int = 30) -> ModelParams:
    """Estimate monthly beta and sigma from daily data.

    Per month m, the one-day increments of X = T - S are regressed on X
    without intercept. The slope estimates e^{beta_m} - 1, so beta_m is taken as
    log(1 + slope). sigma is the standard deviation of the regression residual
    divided by T_t and by the one-day kernel factor sqrt(expm1(2 beta)/(2 beta)).
    """
    T = series.values
    X = T - eval_seasonal(seasonal, series.day_index)
    if len(T) < 2 * DAYS_PER_YEAR:
        raise CalibrationError("need at least two years of data")
    x0, dx = X[:-1], np.diff(X)
    months = series.months[:-1]
    betas = np.empty(12)
    scaled_resid = np.empty_like(x0)
    for m in range(12):
        sel = months == m
        n = int(sel.sum())
        if n < min_obs:
            raise CalibrationError(f"month {m + 1} has {n} observations (< {min_obs})")
        xm, dxm = x0[sel], dx[sel]
        sxx = float(xm @ xm)
        if sxx <= 1e-12 * n:
            raise CalibrationError("no mean-reversion signal")
        slope = float(xm @ dxm) / sxx
        phi = 1.0 + slope
        beta = math.log(phi) if phi > 0 else slope
        betas[m] = min(beta, -1e-6)
        kappa = math.sqrt(_expm1_over(np.array(2.0 * betas[m]))[()])
        scaled_resid[sel] = (dxm - slope * xm) / (T[:-1][sel] * kappa)
    sigma = float(np.std(scaled_resid, ddof=1))
    return ModelParams(seasonal, BetaCurve(betas), sigma, lam, series.station_id)


# --- simulation --------------------------------------------------------------

def time_grid(t0: float, t_end: float, dt: float, extra: Sequence[float] = ()) -> np.ndarray:
    """Uniform grid from t0 with step dt, closed at t_end, plus ``extra`` points."""
    if not 0 < dt <= 1:
        raise ValueError("dt must be in (0, 1]")
    if t_end < t0:
        raise ValueError("t_end must be >= t0")
    n = int(math.floor((t_end - t0) / dt + 1e-9))
    pts = t0 + dt * np.arange(n + 1)
    pts = np.concatenate([pts, [t_end], [e for e in extra if t0 <= e <= t_end]])
    pts = np.unique(pts)
    # merge points closer than 1e-9 produced by rounding
    keep = np.concatenate([[True], np.diff(pts) > 1e-9])
    return pts[keep]


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Independent stream for one block of paths, keyed by (seed, block)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _block_sizes(n_paths: int, antithetic: bool) -> list[int]:
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if antithetic and n_paths % 2:
        raise ValueError("antithetic sampling needs an even path count")
    full, rest = divmod(n_paths, BLOCK_SIZE)
    return [BLOCK_SIZE] * full + ([rest] if rest else [])


def brownian_increments(times, n_paths: int, seed: int, block: int = 0, chol=None,
                        antithetic: bool = False) -> np.ndarray:
    """Increments dB of shape (n_paths, n_steps, N) for one block.

    Independent normals are mapped through the Cholesky factor ``chol``
    (default: one station, identity).
    """
    L = np.eye(1) if chol is None else np.asarray(chol, dtype=float)
    N = L.shape[0]
    h = np.diff(np.asarray(times, dtype=float))
    rng = block_rng(seed, block)
    n_draw = n_paths // 2 if antithetic else n_paths
    Z = rng.standard_normal((n_draw, len(h), N))
    if antithetic:
        Z = np.concatenate([Z, -Z], axis=0)
    if N > 1:
        Z = Z @ L.T
    return Z * np.sqrt(h)[None, :, None]


def girsanov_shift(increments, lam, dt) -> np.ndarray:
    """Brownian increments under P re-expressed as Q increments: dB = dW + lam dt.

    Feeding the result into :func:`integrate_increments` with the same draws
    reproduces a ``measure="Q"`` simulation path by path. ``lam`` may hold one
    value per station (last axis) and ``dt`` one value per step.
    """
    inc = np.asarray(increments, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if inc.ndim == 3:
        return inc + np.asarray(dt, dtype=float)[None, :, None] * lam.reshape(1, 1, -1)
    return inc + np.asarray(dt, dtype=float) * lam


def radon_nikodym(increments, lam: float, dt) -> np.ndarray:
    """Density process Z(T) = exp(lam B_T - lam^2 T / 2) per path."""
    inc = np.asarray(increments, dtype=float)
    horizon = float(np.sum(dt))
    B_T = inc.reshape(inc.shape[0], -1).sum(axis=1)
    return np.exp(lam * B_T - 0.5 * lam ** 2 * horizon)


def integrate_increments(stations: Sequence[ModelParams], times, T0, dB,
                         dynamics: str = "unfrozen",
                         anchors: Sequence[FrozenCurve] | None = None) -> np.ndarray:
    """Step the temperature SDE along given Brownian increments.

    Each step uses the exact mean-reversion decay over the step and the
    exact one-step variance of the linear kernel:

        X_{k+1} = e^{b_k} X_k + vol_k * sqrt(expm1(2 b_k) / (2 b_k)) * dB_k,
        b_k = B(t_{k+1}) - B(t_k),

    where vol_k = sigma * T_k (unfrozen) or sigma * Tbar(t_k + h/2) (frozen).
    Returns temperatures of shape (n_paths, n_times, N).
    """
    if dynamics not in DYNAMICS:
        raise ValueError(f"dynamics must be one of {DYNAMICS}")
    times = np.asarray(times, dtype=float)
    dB = np.asarray(dB, dtype=float)
    if dB.ndim == 2:
        dB = dB[:, :, None]
    n_paths, n_steps, N = dB.shape
    if n_steps != len(times) - 1 or N != len(stations):
        raise ValueError("increment shape does not match times/stations")
    T0 = np.broadcast_to(np.asarray(T0, dtype=float), (N,))
    S = np.column_stack([p.S(times) for p in stations])
    Bint = np.column_stack([p.beta.integral(times) for p in stations])
    b = np.diff(Bint, axis=0)
    decay = np.exp(b)
    kappa = np.sqrt(_expm1_over(2.0 * b))
    sigma = np.array([p.sigma for p in stations])
    if dynamics == "frozen":
        if anchors is None:
            anchors = [FrozenCurve(p, times[0], T0[i]) for i, p in enumerate(stations)]
        mid = 0.5 * (times[1:] + times[:-1])
        frozen_vol = np.column_stack([sigma[i] * anchors[i](mid) for i in range(N)]) * kappa

    out = np.empty((n_paths, len(times), N))
    out[:, 0, :] = T0
    X = np.broadcast_to(T0 - S[0], (n_paths, N)).copy()
    for k in range(n_steps):
        if dynamics == "frozen":
            X = decay[k] * X + frozen_vol[k] * dB[:, k, :]
        else:
            with np.errstate(over="ignore", invalid="ignore"):
                X = decay[k] * X + (sigma * kappa[k]) * (S[k] + X) * dB[:, k, :]
        out[:, k + 1, :] = S[k + 1] + X
        if not np.all(np.isfinite(X)):
            bad = np.argwhere(~np.isfinite(X))[0]
            raise SimulationError(f"non-finite temperature at step {k + 1}, path {bad[0]}, station {bad[1]}")
    return out


def simulate_blocks(stations: Sequence[ModelParams], times, T0, n_paths: int, seed: int,
                    measure: str = "P", dynamics: str = "unfrozen", chol=None,
                    antithetic: bool = False, anchors=None,
                    reducer: Callable[[np.ndarray], object] | None = None) -> list:
    """Simulate in fixed-size blocks and apply ``reducer`` to each block.

    Block b always draws from stream (seed, b), so the result does not depend
    on how many worker threads (``TEMPDERIV_THREADS``) run the blocks.
    """
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}")
    times = np.asarray(times, dtype=float)
    h = np.diff(times)
    if np.any(h <= 0) or np.any(h > 1 + 1e-12):
        raise ValueError("time steps must be in (0, 1]")
    lam = np.array([p.lam for p in stations])
    sizes = _block_sizes(n_paths, antithetic)
    reducer = reducer or (lambda paths: paths)

    def run(block):
        dB = brownian_increments(times, sizes[block], seed, block, chol, antithetic)
        if measure == "Q":
            dB = girsanov_shift(dB, lam, h)
        return reducer(integrate_increments(stations, times, T0, dB, dynamics, anchors))

    workers = min(worker_count(), len(sizes))
    if workers == 1:
        return [run(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, range(len(sizes))))


@dataclass
class PathSet:
    measure: str
    dt: float
    times: np.ndarray
    paths: np.ndarray  # (n_paths, n_times)
    seed: int
    dynamics: str = "unfrozen"
    params: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        """Rows are time points, columns are paths; header comments echo the run."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# seed={self.seed} measure={self.measure} dynamics={self.dynamics} dt={self.dt!r}\n")
            fh.write(f"# params={json.dumps(self.params, sort_keys=True)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"path_{i}" for i in range(self.paths.shape[0])])
            for j, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in self.paths[:, j]])


def simulate(params: ModelParams, t0: float, t_end: float, dt: float, n: int,
             measure: str = "P", seed: int = 0, T0: float | None = None,
             antithetic: bool = False, dynamics: str = "unfrozen") -> PathSet:
    """Simulate ``n`` temperature paths on [t0, t_end].

    ``T0`` defaults to the seasonal mean at t0. Under ``"Q"`` the Brownian
    increments are shifted by lam*dt (see :func:`girsanov_shift`).
    """
    if dt > 1:
        raise ValueError("dt must be <= 1 day")
    if n < 1:
        raise ValueError("n must be >= 1")
    T0 = float(params.S(t0)) if T0 is None else float(T0)
    times = time_grid(t0, t_end, dt)
    blocks = simulate_blocks([params], times, T0, n, seed, measure, dynamics,
                             antithetic=antithetic, reducer=lambda p: p[:, :, 0])
    return PathSet(measure, dt, times, np.concatenate(blocks, axis=0), seed, dynamics,
                   params.to_dict())
