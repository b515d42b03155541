"""Correlated multi-station temperatures and basket CAT/GDD futures.

Station i follows its own single-station dynamics; the Brownian drivers are
correlated through B = L V with L the lower Cholesky factor of the residual
correlation matrix Omega. The basket index is M(t) = sum_i w_i T_i(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ingest import DailySeries
from .model import (
    FrozenCurve,
    ModelParams,
    PathSet,
    kernel_accumulate,
    simulate_blocks,
    time_grid,
)
from .pricing import (
    ContractSpec,
    PriceReport,
    PricingError,
    cat_futures,
    expected_excess,
    gdd_layout,
)

MIN_PIVOT = 1e-10


class CorrelationError(ValueError):
    pass


def cholesky(omega, jitter: float = 0.0, min_pivot: float = MIN_PIVOT) -> np.ndarray:
    """Lower-triangular L with positive diagonal and L L^T = omega.

    Matrices whose smallest pivot falls below ``min_pivot`` are rejected (the
    error reports that pivot); an explicit ``jitter`` is added to the
    diagonal before factorising.
    """
    A = np.array(omega, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise CorrelationError("correlation matrix must be square")
    if not np.allclose(A, A.T, atol=1e-12, rtol=0):
        raise CorrelationError("correlation matrix must be symmetric")
    n = A.shape[0]
    A[np.diag_indices(n)] += jitter
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > min_pivot:
            raise CorrelationError(f"matrix is not positive definite: pivot {pivot:.3e} at row {j}")
        L[j, j] = math.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (A[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def estimate_correlation(deseasonalized: Sequence) -> np.ndarray:
    """Pearson correlation of aligned de-seasonalised series, unit diagonal."""
    starts = {s.start_date for s in deseasonalized if isinstance(s, DailySeries)}
    if len(starts) > 1:
        raise CorrelationError(f"series start on different dates: {sorted(starts)}")
    arrays = [np.asarray(s.values if isinstance(s, DailySeries) else s, dtype=float)
              for s in deseasonalized]
    if len({len(a) for a in arrays}) > 1:
        raise CorrelationError("series have different lengths")
    R = np.corrcoef(np.vstack(arrays))
    np.fill_diagonal(R, 1.0)
    return R


@dataclass
class CorrelationModel:
    weights: np.ndarray
    stations: list
    omega: np.ndarray
    jitter: float = 0.0
    L: np.ndarray = field(init=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        self.stations = list(self.stations)
        n = len(self.stations)
        if self.weights.shape != (n,) or self.omega.shape != (n, n):
            raise CorrelationError("weights/omega do not match the station count")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise CorrelationError(f"weights must be non-negative and sum to 1, got {self.weights.tolist()}")
        if not np.allclose(np.diag(self.omega), 1.0, atol=1e-12, rtol=0):
            raise CorrelationError("correlation matrix needs a unit diagonal")
        self.L = cholesky(self.omega, self.jitter)

    def __len__(self):
        return len(self.stations)

    def permuted(self, order) -> "CorrelationModel":
        order = list(order)
        return CorrelationModel(self.weights[order], [self.stations[i] for i in order],
                                self.omega[np.ix_(order, order)], self.jitter)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "omega": self.omega.tolist(),
                "stations": [p.to_dict() for p in self.stations]}


def _states(cm: CorrelationModel, states) -> tuple[float, np.ndarray]:
    t, temps = states
    temps = np.atleast_1d(np.asarray(temps, dtype=float))
    if temps.shape != (len(cm),):
        raise PricingError("need one temperature per station")
    return float(t), temps


def simulate_joint(cm: CorrelationModel, t0: float, t_end: float, dt: float, n: int,
                   measure: str = "P", seed: int = 0, T0=None, dynamics: str = "unfrozen",
                   antithetic: bool = False) -> list[PathSet]:
    """Correlated paths, one :class:`PathSet` per station.

    One independent normal vector per step is mapped through L; under "Q" each
    station's increments are shifted by its own lam_i dt.
    """
    T0 = (np.array([float(p.S(t0)) for p in cm.stations]) if T0 is None
          else np.asarray(T0, dtype=float))
    times = time_grid(t0, t_end, dt)
    anchors = [FrozenCurve(p, t0, T0[i]) for i, p in enumerate(cm.stations)]
    blocks = simulate_blocks(cm.stations, times, T0, n, seed, measure, dynamics,
                             chol=cm.L, antithetic=antithetic, anchors=anchors)
    paths = np.concatenate(blocks, axis=0)
    return [PathSet(measure, dt, times, paths[:, :, i], seed, dynamics, p.to_dict())
            for i, p in enumerate(cm.stations)]


def _no_option(c: ContractSpec) -> None:
    if c.strike is not None and c.exercise is not None:
        raise PricingError("basket options are not supported")


def basket_cat_futures(cm: CorrelationModel, states, c: ContractSpec) -> PriceReport:
    """sum_i w_i F_CAT,i by linearity of expectation."""
    _no_option(c)
    t, temps = _states(cm, states)
    parts = [cat_futures(p, (t, temps[i]), c).value for i, p in enumerate(cm.stations)]
    value = float(sum(w * f for w, f in zip(cm.weights, parts)))
    attribution = [{"station": p.station_id, "weight": float(w), "station_price": f,
                    "contribution": float(w * f)}
                   for p, w, f in zip(cm.stations, cm.weights, parts)]
    return PriceReport(value, inputs={"basket": cm.to_dict(), "state": {"t": t, "T": temps.tolist()},
                                      "contract": c.to_dict(), "attribution": attribution})


def basket_variance_terms(cm: CorrelationModel, t: float, temps, nodes):
    """(xi, delta_bar) on ``nodes``: own-variance and cross-covariance parts.

    xi = sum_i w_i^2 sum_{j<=i} L_ij^2 V_ii, delta_bar = sum_{i<j} w_i w_j
    (sum_q L_iq L_jq) V_ij with V_ij = int_t^x sigma_i sigma_j Tbar_i Tbar_j
    e^{(B_i + B_j)(x) - (B_i + B_j)(u)} du.
    """
    st, w, L = cm.stations, cm.weights, cm.L
    curves = [FrozenCurve(p, t, temps[i]) for i, p in enumerate(st)]
    n = len(st)
    xi = np.zeros(len(nodes))
    dbar = np.zeros(len(nodes))
    for i in range(n):
        for j in range(i, n):
            if st[i].sigma == 0 or st[j].sigma == 0:
                continue
            coef = st[i].sigma * st[j].sigma
            V = kernel_accumulate(lambda u, ci=curves[i], cj=curves[j]: coef * ci(u) * cj(u),
                                  st[i].beta + st[j].beta, t, nodes)
            if i == j:
                xi += w[i] ** 2 * np.sum(L[i, :i + 1] ** 2) * V
            else:
                dbar += w[i] * w[j] * (L[i, :i + 1] @ L[j, :i + 1]) * V
    return xi, dbar


def basket_gdd_futures(cm: CorrelationModel, states, c: ContractSpec) -> PriceReport:
    """Basket GDD futures int_{t1}^{t2} E_Q[max(M_x - C, 0)] dx.

    The basket is Gaussian with mean psi = sum_i w_i m_i(t, x) and variance
    xi + 2 delta_bar; zero variance falls back to max(psi - C, 0).
    """
    _no_option(c)
    t, temps = _states(cm, states)
    if t > c.t1:
        raise PricingError("t > t1 not supported for GDD futures")
    layouts = [gdd_layout(p, t, c.t1, c.t2, FrozenCurve(p, t, temps[i]))
               for i, p in enumerate(cm.stations)]
    grid = layouts[0].grid
    psi = np.zeros(len(grid))
    for i, (p, lay) in enumerate(zip(cm.stations, layouts)):
        psi = psi + cm.weights[i] * (lay.seasonal + lay.drift + (temps[i] - float(p.S(t))) * lay.decay)
    xi, dbar = basket_variance_terms(cm, t, temps, grid.nodes)
    sd = np.sqrt(np.maximum(xi + 2.0 * dbar, 0.0))
    value = float(grid.integrate(expected_excess(psi, sd, c.threshold)))
    return PriceReport(value, inputs={"basket": cm.to_dict(), "state": {"t": t, "T": temps.tolist()},
                                      "contract": c.to_dict()})
