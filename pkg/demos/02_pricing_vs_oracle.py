"""Closed-form CAT/GDD futures and a CAT option, each next to its Monte Carlo price.

The oracle simulates the same linearised dynamics the formulas assume, so
differences should be within a few standard errors.
"""
import numpy as np

from tempderiv import ContractSpec, ModelParams, SeasonalParams, cat_futures, cat_option, gdd_futures, mc_price
from tempderiv.model import BetaCurve
from tempderiv.oracle import CatOptionPayoff, CatPayoff, GddPayoff

p = ModelParams(SeasonalParams.from_amplitude_phase(22.15, 4.57e-5, 1.98, -67.71),
                BetaCurve(-0.25), sigma=0.01, lam=0.02)
state = (0.0, 24.5)  # valuation day and today's temperature

cat = ContractSpec("CAT", 30.0, 60.0)
cf = cat_futures(p, state, cat).value
mc = mc_price(CatPayoff(30.0, 60.0), p, state, n=50_000, seed=1)
print(f"CAT futures   closed {cf:10.4f}   MC {mc.mean:10.4f} +- {mc.std_error:.4f}")

for C in (22.0, 24.0, 26.0):
    g = gdd_futures(p, state, ContractSpec("GDD", 30.0, 60.0, threshold=C)).value
    m = mc_price(GddPayoff(30.0, 60.0, C), p, state, n=50_000, seed=2)
    print(f"GDD C={C:4.1f}    closed {g:10.4f}   MC {m.mean:10.4f} +- {m.std_error:.4f}")

opt = ContractSpec("CAT", 30.0, 60.0, strike=round(cf), rate=0.001, exercise=20.0)
o = cat_option(p, state, opt).value
m = mc_price(CatOptionPayoff(opt), p, state, n=50_000, seed=3)
print(f"CAT call K={opt.strike:.0f} closed {o:10.4f}   MC {m.mean:10.4f} +- {m.std_error:.4f}")

# Far below the strike range the option is just the discounted forward.
deep = ContractSpec("CAT", 30.0, 60.0, strike=cf - 1e4, rate=0.001, exercise=20.0)
print("deep ITM / intrinsic =", cat_option(p, state, deep).value / (np.exp(-0.001 * 20) * 1e4))
