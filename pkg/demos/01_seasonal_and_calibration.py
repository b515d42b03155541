"""Fit a seasonal mean to a synthetic station and calibrate the mean-reverting model.

We simulate 30 years of daily temperatures from known parameters, then check
how much of the truth the estimators give back.
"""
import datetime as dt

import numpy as np

from tempderiv import DailySeries, ModelParams, SeasonalParams, calibrate, fit_seasonal, simulate
from tempderiv.model import BetaCurve

truth = ModelParams(SeasonalParams.from_amplitude_phase(22.15, 4.57e-5, 1.98, -67.71),
                    BetaCurve(np.linspace(-0.3, -0.15, 12)), sigma=0.012, lam=0.0)
paths = simulate(truth, 0.0, 30 * 365 - 1.0, 1.0, 1, seed=42)
series = DailySeries("demo", dt.date(1990, 1, 1), paths.paths[0])

fit = fit_seasonal(series)
print("seasonal fit  a=%.3f  b=%.2e  c=%.3f  d=%.3f  rmse=%.3f" % (
    fit.params.a, fit.params.b, fit.params.c, fit.params.d, fit.rmse))
print("truth         a=%.3f  b=%.2e  c=%.3f  d=%.3f" % (
    truth.seasonal.a, truth.seasonal.b, truth.seasonal.c, truth.seasonal.d))

est = calibrate(series, fit.params)
print("\nmonth   beta(true)  beta(est)")
for m, (bt, be) in enumerate(zip(truth.beta.values, est.beta.values), start=1):
    print(f"{m:5d}   {bt:9.3f}  {be:9.3f}")
print(f"sigma: true {truth.sigma:.4f}, estimated {est.sigma:.4f}")
