"""Closed-form CAT and GDD futures and options for a single station.

All prices are in index points (degC x day). Volatility inside every
variance or drift integral is taken along the frozen mean curve anchored at
the valuation state (see :class:`tempderiv.model.FrozenCurve`), which makes
the Gaussian formulas exact for the frozen linear dynamics.

Quadrature: composite Simpson with step <= 0.25 day for single integrals and
inner kernels (shorter under fast mean reversion, see
:func:`tempderiv.model.kernel_step`), <= 0.5 day for the outer GDD window
integral, split at month boundaries. Integrals of pure exp(B(x) - B(u)) factors are exact.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr

from .model import (
    FrozenCurve,
    ModelParams,
    conditional_variance,
    kernel_step,
    lambda_drift,
)
from .quadrature import SimpsonGrid, simpson

STEP = 0.25
OUTER_STEP = 0.5
INDEXES = ("CAT", "GDD")
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class PricingError(ValueError):
    pass


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def norm_cdf(x):
    return ndtr(x)


@dataclass(frozen=True)
class ContractSpec:
    index: str
    t1: float
    t2: float
    threshold: float | None = None
    strike: float | None = None
    rate: float = 0.0
    exercise: float | None = None

    def __post_init__(self):
        if self.index not in INDEXES:
            raise PricingError(f"index must be one of {INDEXES}")
        if not self.t1 < self.t2:
            raise PricingError("need t1 < t2")
        if self.rate < 0:
            raise PricingError("rate must be non-negative")
        if self.exercise is not None and self.exercise > self.t1:
            raise PricingError("option exercise must be <= t1")
        if self.index == "GDD" and self.threshold is None:
            raise PricingError("GDD contracts need a threshold")

    def window(self, t1: float, t2: float) -> "ContractSpec":
        return ContractSpec(self.index, t1, t2, self.threshold, self.strike, self.rate,
                            None if self.exercise is None or self.exercise > t1 else self.exercise)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PriceReport:
    value: float
    method: str = "closed-form"
    std_error: float | None = None
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.std_error is not None and not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")

    def __float__(self):
        return float(self.value)

    def to_dict(self) -> dict:
        d = {"value": self.value, "method": self.method}
        if self.std_error is not None:
            d["std_error"] = self.std_error
        d["inputs"] = self.inputs
        return d


def expected_excess(mean, sd, threshold):
    """E[max(Y - threshold, 0)] for Y ~ N(mean, sd^2); sd = 0 gives the payoff."""
    mean, sd = np.broadcast_arrays(np.asarray(mean, dtype=float), np.asarray(sd, dtype=float))
    shape = mean.shape
    gap = np.atleast_1d(mean - threshold)
    sd = np.atleast_1d(sd)
    out = np.maximum(gap, 0.0)
    pos = sd > 0
    if np.any(pos):
        d = gap[pos] / sd[pos]
        out[pos] = gap[pos] * norm_cdf(d) + sd[pos] * norm_pdf(d)
    return out.reshape(shape)


def _echo(params: ModelParams, state, c: ContractSpec, **extra) -> dict:
    return {"params": params.to_dict(), "state": {"t": state[0], "T": state[1]},
            "contract": c.to_dict(), **extra}


def _anchor(params, state, anchor):
    return anchor or FrozenCurve(params, float(state[0]), float(state[1]))


def _max_rate(params: ModelParams) -> float:
    return float(np.max(np.abs(params.beta.values)))


def _breaks(params: ModelParams, a: float, b: float, *extra):
    return list(params.beta.breakpoints(a, b)) + [e for e in extra if a < e < b]


# --- CAT ----------------------------------------------------------------------

def cat_futures_affine(params: ModelParams, s: float, t1: float, t2: float,
                       anchor: FrozenCurve) -> tuple[float, float]:
    """CAT futures at time ``s`` as ``intercept + slope * T_s``.

    The lam term is the double integral over u in [s, t2], x in [max(u, t1), t2],
    split at t1 so the inner x-integral of exp(B(x) - B(u)) is exact.
    """
    if s > t1:
        raise PricingError("valuation time after t1; use cat_futures_in_period")
    beta = params.beta
    slope = float(beta.exp_integral(s, t1, t2))
    seasonal = simpson(params.S, t1, t2, STEP)
    l1 = 0.0
    if params.lam != 0 and params.sigma != 0:
        k = params.sigma * params.lam
        l1 = simpson(lambda u: k * anchor(u) * beta.exp_integral(u, np.maximum(u, t1), t2),
                     s, t2, kernel_step(STEP, _max_rate(params)), _breaks(params, s, t2, t1))
    return seasonal - float(params.S(s)) * slope + l1, slope


def cat_futures(params: ModelParams, state, c: ContractSpec,
                anchor: FrozenCurve | None = None) -> PriceReport:
    """Pre-period CAT futures price E_Q[int_{t1}^{t2} T_x dx | T_t]."""
    t, T_t = float(state[0]), float(state[1])
    if t > c.t1:
        raise PricingError("t > t1: the measurement period has started; use cat_futures_in_period")
    intercept, slope = cat_futures_affine(params, t, c.t1, c.t2, _anchor(params, state, anchor))
    return PriceReport(intercept + slope * T_t, inputs=_echo(params, state, c))


def cat_futures_in_period(params: ModelParams, state, realized, c: ContractSpec) -> PriceReport:
    """In-period price: realised CAT on [t1, t] plus the model value on [t, t2].

    ``realized`` holds the observed daily averages at t1, t1+1, ..., t.
    """
    t, T_t = float(state[0]), float(state[1])
    if not c.t1 <= t <= c.t2:
        raise PricingError("in-period valuation needs t1 <= t <= t2")
    days = t - c.t1
    if abs(days - round(days)) > 1e-9:
        raise PricingError("t - t1 must be a whole number of days")
    obs = np.asarray(realized, dtype=float)
    if len(obs) != int(round(days)) + 1:
        raise PricingError(f"expected {int(round(days)) + 1} realised values on [t1, t], got {len(obs)}")
    gaps = np.flatnonzero(~np.isfinite(obs))
    if gaps.size:
        raise PricingError(f"missing realised observations at days {[c.t1 + g for g in gaps.tolist()]}")
    realized_leg = float(np.sum(0.5 * (obs[1:] + obs[:-1]))) if len(obs) > 1 else 0.0
    model_leg = 0.0
    if t < c.t2:
        model_leg = cat_futures(params, (t, T_t), c.window(t, c.t2)).value
    return PriceReport(realized_leg + model_leg,
                       inputs=_echo(params, state, c, realized_leg=realized_leg, model_leg=model_leg))


def cat_futures_vol(params: ModelParams, state, c: ContractSpec, anchor: FrozenCurve | None = None):
    """Term structure s -> sigma * Tbar_s * int_{t1}^{t2} e^{B(x)-B(s)} dx, for s <= t1."""
    curve = _anchor(params, state, anchor)

    def vol(s):
        s = np.asarray(s, dtype=float)
        if np.any(s > c.t1):
            raise PricingError("CAT futures volatility is defined for s <= t1")
        return params.sigma * curve(s) * params.beta.exp_integral(s, c.t1, c.t2)

    return vol


def cat_option_variance(params: ModelParams, state, c: ContractSpec, anchor=None) -> float:
    """int_t^{t_n} Sigma_CAT(s)^2 ds."""
    t = float(state[0])
    if c.exercise is None:
        raise PricingError("option needs an exercise time")
    if not t <= c.exercise <= c.t1:
        raise PricingError("need t <= exercise <= t1")
    vol = cat_futures_vol(params, state, c, anchor)
    return simpson(lambda s: vol(s) ** 2, t, c.exercise, kernel_step(STEP, 2 * _max_rate(params)),
                   _breaks(params, t, c.exercise))


def cat_option(params: ModelParams, state, c: ContractSpec) -> PriceReport:
    """European call on CAT futures, strike ``c.strike``, exercised at ``c.exercise``."""
    if c.strike is None:
        raise PricingError("option needs a strike")
    t = float(state[0])
    F = cat_futures(params, state, c).value
    var = cat_option_variance(params, state, c)
    disc = math.exp(-c.rate * (c.exercise - t))
    gap = F - c.strike
    sd = math.sqrt(max(var, 0.0))
    if sd == 0.0:
        value = disc * max(gap, 0.0)
    else:
        value = disc * float(expected_excess(F, sd, c.strike))
    return PriceReport(value, inputs=_echo(params, state, c, futures=F, sigma_tn=sd))


# --- GDD ----------------------------------------------------------------------

@dataclass
class _GddLayout:
    grid: SimpsonGrid
    seasonal: np.ndarray     # S_x on the grid
    decay: np.ndarray        # e^{B(x) - B(s)}
    drift: np.ndarray        # lam drift from s to x
    psi: np.ndarray          # sqrt(Psi^2(s, x))


def gdd_layout(params: ModelParams, s: float, t1: float, t2: float, anchor: FrozenCurve) -> _GddLayout:
    """State-independent pieces of the GDD integrand on the outer grid."""
    if s > t1:
        raise PricingError("valuation time after t1")
    grid = SimpsonGrid(t1, t2, OUTER_STEP, _breaks(params, t1, t2))
    x = grid.nodes
    B = params.beta.integral
    drift = lambda_drift(params, anchor, s, x)
    psi = np.sqrt(np.maximum(conditional_variance(params, anchor, s, x), 0.0))
    return _GddLayout(grid, params.S(x), np.exp(B(x) - B(s)), drift, psi)


def _gdd_from_layout(layout: _GddLayout, X_s, threshold: float):
    """GDD futures for one or many deviations X_s = T_s - S_s."""
    X_s = np.asarray(X_s, dtype=float)
    mean = layout.seasonal + layout.drift + X_s[..., None] * layout.decay
    return layout.grid.integrate(expected_excess(mean, layout.psi, threshold))


def gdd_futures(params: ModelParams, state, c: ContractSpec, anchor: FrozenCurve | None = None) -> PriceReport:
    """GDD futures E_Q[int_{t1}^{t2} max(T_x - threshold, 0) dx | T_t]."""
    t, T_t = float(state[0]), float(state[1])
    if t > c.t1:
        raise PricingError("t > t1 not supported for GDD futures")
    layout = gdd_layout(params, t, c.t1, c.t2, _anchor(params, state, anchor))
    value = float(_gdd_from_layout(layout, T_t - float(params.S(t)), c.threshold))
    return PriceReport(value, inputs=_echo(params, state, c))


def gdd_futures_vol(params: ModelParams, state, c: ContractSpec) -> float:
    """sigma * T_t * int_{t1}^{t2} e^{B(x)-B(t)} Phi(h(t,x) / Psi(t,x)) dx at the state time."""
    t, T_t = float(state[0]), float(state[1])
    layout = gdd_layout(params, t, c.t1, c.t2, _anchor(params, state, None))
    mean = layout.seasonal + layout.drift + (T_t - float(params.S(t))) * layout.decay
    gap = mean - c.threshold
    prob = np.where(gap > 0, 1.0, 0.0)
    miss = 1.0 - prob
    pos = layout.psi > 0
    prob[pos] = norm_cdf(gap[pos] / layout.psi[pos])
    miss[pos] = norm_cdf(-gap[pos] / layout.psi[pos])
    hit, short = layout.grid.integrate(layout.decay * prob), layout.grid.integrate(layout.decay * miss)
    # integrate the smaller of Phi and 1 - Phi so both limits are exact
    kernel = hit if hit <= short else float(params.beta.exp_integral(t, c.t1, c.t2)) - short
    return float(params.sigma * T_t * max(kernel, 0.0))


def gdd_option(params: ModelParams, state, c: ContractSpec, n: int = 100_000, seed: int = 0,
               chunk: int = 20_000) -> PriceReport:
    """Call on GDD futures, valued by Monte Carlo over the Gaussian state at exercise.

    Under the frozen dynamics T_{t_n} is normal given T_t; each draw is pushed
    through the closed-form GDD futures at t_n and the discounted payoff
    max(F_GDD(t_n) - strike, 0) is averaged. A fixed seed gives common random
    numbers across strikes.
    """
    if c.strike is None or c.exercise is None:
        raise PricingError("option needs a strike and an exercise time")
    t, T_t = float(state[0]), float(state[1])
    tn = float(c.exercise)
    if not t <= tn <= c.t1:
        raise PricingError("need t <= exercise <= t1")
    anchor = _anchor(params, state, None)
    B = params.beta.integral
    X_t = T_t - float(params.S(t))
    mean_n = X_t * math.exp(B(tn) - B(t)) + float(lambda_drift(params, anchor, t, [tn])[0])
    sd_n = math.sqrt(max(float(conditional_variance(params, anchor, t, [tn])[0]), 0.0))
    layout = gdd_layout(params, tn, c.t1, c.t2, anchor)
    disc = math.exp(-c.rate * (tn - t))
    if sd_n == 0.0:
        fut = float(_gdd_from_layout(layout, mean_n, c.threshold))
        return PriceReport(disc * max(fut - c.strike, 0.0), method="mc", std_error=0.0,
                           inputs=_echo(params, state, c, n=n, seed=seed))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    Y = rng.standard_normal(n)
    payoff = np.empty(n)
    for lo in range(0, n, chunk):
        fut = _gdd_from_layout(layout, mean_n + sd_n * Y[lo:lo + chunk], c.threshold)
        payoff[lo:lo + chunk] = np.maximum(fut - c.strike, 0.0)
    payoff *= disc
    se = float(payoff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return PriceReport(float(payoff.mean()), method="mc", std_error=se,
                       inputs=_echo(params, state, c, n=n, seed=seed))


def price(params: ModelParams, state, c: ContractSpec, **mc) -> PriceReport:
    """Dispatch on index and on whether the contract is an option."""
    is_option = c.strike is not None and c.exercise is not None
    if c.index == "CAT":
        return cat_option(params, state, c) if is_option else cat_futures(params, state, c)
    return gdd_option(params, state, c, **mc) if is_option else gdd_futures(params, state, c)
