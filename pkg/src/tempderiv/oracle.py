"""Monte Carlo reference prices for every closed form.

Paths are simulated under Q (frozen dynamics by default, so the oracle
targets the same linear SDE as the formulas), each path's payoff is integrated
with the trapezoidal rule on the simulation grid, and the mean is reported
with its standard error.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basket import CorrelationModel
from .model import FrozenCurve, ModelParams, simulate_blocks, time_grid
from .pricing import ContractSpec, cat_futures_affine
from .quadrature import trapezoid

DEFAULT_PATHS = 100_000
DEFAULT_DT = 0.25


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int
    dynamics: str
    dt: float = DEFAULT_DT
    antithetic: bool = False

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths,
                "seed": self.seed, "dynamics": self.dynamics, "dt": self.dt,
                "antithetic": self.antithetic}


class Payoff:
    """Base class: ``bind`` turns (times, temps[n, k, N]) into per-path values."""

    horizon: float
    marks: tuple = ()

    def discount(self, rate_t: float) -> float:
        return 1.0

    def bind(self, stations, weights, anchors, t0):
        raise NotImplementedError


def _basket(paths, weights):
    return paths @ weights


@dataclass(frozen=True)
class CatPayoff(Payoff):
    t1: float
    t2: float

    @property
    def horizon(self):
        return self.t2

    @property
    def marks(self):
        return (self.t1, self.t2)

    def bind(self, stations, weights, anchors, t0):
        def f(times, paths):
            m = (times >= self.t1 - 1e-12) & (times <= self.t2 + 1e-12)
            return trapezoid(_basket(paths[:, m, :], weights), times[m])
        return f


@dataclass(frozen=True)
class GddPayoff(Payoff):
    t1: float
    t2: float
    threshold: float

    @property
    def horizon(self):
        return self.t2

    @property
    def marks(self):
        return (self.t1, self.t2)

    def bind(self, stations, weights, anchors, t0):
        def f(times, paths):
            m = (times >= self.t1 - 1e-12) & (times <= self.t2 + 1e-12)
            excess = np.maximum(_basket(paths[:, m, :], weights) - self.threshold, 0.0)
            return trapezoid(excess, times[m])
        return f


@dataclass(frozen=True)
class ConstantPayoff(Payoff):
    value: float = 1.0
    at: float = 1.0

    @property
    def horizon(self):
        return self.at

    def bind(self, stations, weights, anchors, t0):
        return lambda times, paths: np.full(paths.shape[0], self.value)


@dataclass(frozen=True)
class CatOptionPayoff(Payoff):
    """max(F_CAT(t_n) - strike, 0) discounted to t, with F_CAT(t_n) evaluated
    from each simulated T_{t_n} (single station)."""

    contract: ContractSpec

    @property
    def horizon(self):
        return self.contract.exercise

    @property
    def marks(self):
        return (self.contract.exercise,)

    def discount(self, t):
        return math.exp(-self.contract.rate * (self.contract.exercise - t))

    def bind(self, stations, weights, anchors, t0):
        if len(stations) != 1:
            raise ValueError("option payoff is single-station")
        c = self.contract
        a, b = cat_futures_affine(stations[0], c.exercise, c.t1, c.t2, anchors[0])
        disc = self.discount(t0)

        def f(times, paths):
            k = int(np.argmin(np.abs(times - c.exercise)))
            return disc * np.maximum(a + b * paths[:, k, 0] - c.strike, 0.0)
        return f


def payoff_for(c: ContractSpec) -> Payoff:
    if c.strike is not None and c.exercise is not None:
        if c.index != "CAT":
            raise ValueError("the oracle prices options on CAT futures only")
        return CatOptionPayoff(c)
    if c.index == "CAT":
        return CatPayoff(c.t1, c.t2)
    return GddPayoff(c.t1, c.t2, c.threshold)


def _unpack(model, state):
    t, temps = state
    if isinstance(model, CorrelationModel):
        return list(model.stations), model.weights, model.L, float(t), np.atleast_1d(np.asarray(temps, float))
    if isinstance(model, ModelParams):
        return [model], np.ones(1), None, float(t), np.atleast_1d(np.asarray(temps, float))
    raise TypeError("model must be ModelParams or CorrelationModel")


def mc_price(payoff: Payoff, model, state, n: int = DEFAULT_PATHS, dt: float = DEFAULT_DT,
             seed: int = 0, dynamics: str = "frozen", antithetic: bool = False) -> McEstimate:
    """Risk-neutral Monte Carlo estimate of ``payoff``.

    ``model`` is a :class:`ModelParams` or a :class:`CorrelationModel`;
    ``state`` is ``(t, T_t)`` or ``(t, [T_i])``. With ``antithetic`` the
    standard error is computed from pair averages.
    """
    if n < 100:
        raise ValueError("the oracle needs n >= 100 paths")
    stations, weights, chol, t, temps = _unpack(model, state)
    if payoff.horizon < t:
        raise ValueError("payoff horizon before valuation time")
    times = time_grid(t, payoff.horizon, dt, payoff.marks)
    anchors = [FrozenCurve(p, t, temps[i]) for i, p in enumerate(stations)]
    f = payoff.bind(stations, weights, anchors, t)

    def reducer(paths):
        v = f(times, paths)
        if antithetic:
            half = len(v) // 2
            v = 0.5 * (v[:half] + v[half:])
        return v

    values = np.concatenate(simulate_blocks(stations, times, temps, n, seed, "Q", dynamics,
                                            chol=chol, antithetic=antithetic, anchors=anchors,
                                            reducer=reducer))
    # identical path values (sigma = 0) give an exact zero, not rounding noise
    se = 0.0 if len(values) < 2 or np.ptp(values) == 0 else float(values.std(ddof=1) / math.sqrt(len(values)))
    return McEstimate(float(values.mean()), se, n, seed, dynamics, dt, antithetic)


def frozen_gap(payoff: Payoff, model, state, **kw) -> dict:
    """Frozen and unfrozen estimates side by side with the same draws."""
    frozen = mc_price(payoff, model, state, dynamics="frozen", **kw)
    unfrozen = mc_price(payoff, model, state, dynamics="unfrozen", **kw)
    return {"frozen": frozen, "unfrozen": unfrozen, "gap": unfrozen.mean - frozen.mean}


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "mean", "std_error"])
            for r in self.rows:
                w.writerow([r.n_paths, repr(r.mean), repr(r.std_error)])


def convergence_report(payoff: Payoff, model, state, n_schedule: Sequence[int], **kw) -> ConvergenceReport:
    """Estimates for an ascending schedule of path counts (same seed)."""
    sched = list(n_schedule)
    if not sched:
        raise ValueError("empty path-count schedule")
    if any(b <= a for a, b in zip(sched, sched[1:])):
        raise ValueError("path-count schedule must be strictly ascending")
    return ConvergenceReport([mc_price(payoff, model, state, n=n, **kw) for n in sched])
