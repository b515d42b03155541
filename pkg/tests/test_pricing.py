import math

import numpy as np
import pytest

from tempderiv.model import BetaCurve, FrozenCurve, ModelParams, simulate
from tempderiv.pricing import (
    ContractSpec,
    PriceReport,
    PricingError,
    cat_futures,
    cat_futures_affine,
    cat_futures_in_period,
    cat_futures_vol,
    cat_option,
    expected_excess,
    gdd_futures,
    gdd_futures_vol,
    gdd_option,
    norm_cdf,
    norm_pdf,
    price,
)
from tempderiv.seasonal import OMEGA, SeasonalParams

from conftest import bole_seasonal, random_params


def seasonal_integral(p: SeasonalParams, t1, t2):
    return (p.a * (t2 - t1) + 0.5 * p.b * (t2 ** 2 - t1 ** 2)
            + p.c * (math.cos(OMEGA * t1) - math.cos(OMEGA * t2)) / OMEGA
            + p.d * (math.sin(OMEGA * t2) - math.sin(OMEGA * t1)) / OMEGA)


@pytest.fixture
def gen():
    return ModelParams(bole_seasonal(), BetaCurve(np.linspace(-0.3, -0.12, 12)), 0.015, 0.03, "gen")


def test_contract_validation():
    with pytest.raises(PricingError):
        ContractSpec("HDD", 0, 1)
    with pytest.raises(PricingError):
        ContractSpec("CAT", 5, 5)
    with pytest.raises(PricingError):
        ContractSpec("CAT", 5, 9, rate=-0.1)
    with pytest.raises(PricingError):
        ContractSpec("CAT", 5, 9, strike=1, exercise=6)
    with pytest.raises(PricingError):
        ContractSpec("GDD", 5, 9)
    with pytest.raises(ValueError):
        PriceReport(1.0, "mc", -1.0)


def test_normal_helpers():
    for x in (-8.0, -1.3, 0.0, 0.7, 6.0):
        assert norm_cdf(x) == pytest.approx(0.5 * math.erfc(-x / math.sqrt(2)), rel=1e-12, abs=1e-300)
        assert norm_pdf(x) == pytest.approx(math.exp(-x * x / 2) / math.sqrt(2 * math.pi), rel=1e-14)
    assert float(expected_excess(3.0, 0.0, 1.0)) == 2.0
    np.testing.assert_allclose(expected_excess([0.0, 0.0], [1.0, 0.0], 0.0), [1 / math.sqrt(2 * math.pi), 0.0])


@pytest.mark.parametrize("change", [{"sigma": 0.0}, {"lam": 0.0}])
def test_cat_seasonal_only(gen, change):
    p = gen.with_(**change)
    c = ContractSpec("CAT", 40.0, 100.0)
    got = cat_futures(p, (10.0, float(p.S(10.0))), c).value
    assert got == pytest.approx(seasonal_integral(p.seasonal, 40.0, 100.0), rel=1e-8)


def test_cat_hand_example():
    p = ModelParams(SeasonalParams(25, 0, 0, 0), BetaCurve(-0.2), 0.01, 0.0)
    got = cat_futures(p, (5.0, 27.0), ContractSpec("CAT", 15.0, 45.0)).value
    assert got == pytest.approx(750 + 2 * (math.exp(-2) - math.exp(-8)) / 0.2, rel=1e-12)


def test_cat_after_t1_is_error(gen):
    with pytest.raises(PricingError, match="in_period"):
        cat_futures(gen, (50.0, 24.0), ContractSpec("CAT", 40.0, 60.0))


def test_cat_additivity(gen):
    state = (3.0, 26.0)
    whole = cat_futures(gen, state, ContractSpec("CAT", 20.0, 90.0)).value
    parts = sum(cat_futures(gen, state, ContractSpec("CAT", a, b)).value for a, b in [(20.0, 47.3), (47.3, 90.0)])
    assert parts == pytest.approx(whole, rel=1e-7)


def test_in_period_endpoints(gen):
    c = ContractSpec("CAT", 30.0, 60.0)
    pre = cat_futures(gen, (30.0, 25.0), c).value
    assert cat_futures_in_period(gen, (30.0, 25.0), [25.0], c).value == pre
    realized = np.linspace(20, 26, 31)
    end = cat_futures_in_period(gen, (60.0, 26.0), realized, c).value
    assert end == pytest.approx(np.sum(0.5 * (realized[1:] + realized[:-1])), rel=1e-14)


def test_in_period_mid(gen):
    c = ContractSpec("CAT", 30.0, 60.0)
    rep = cat_futures_in_period(gen, (40.0, 30.0), np.full(11, 30.0), c)
    assert rep.inputs["realized_leg"] == 300.0
    assert rep.value == pytest.approx(300.0 + cat_futures(gen, (40.0, 30.0), ContractSpec("CAT", 40.0, 60.0)).value)
    bad = np.full(11, 30.0)
    bad[[2, 5]] = np.nan
    with pytest.raises(PricingError, match=r"32\.0, 35\.0"):
        cat_futures_in_period(gen, (40.0, 30.0), bad, c)


def test_cat_vol_limits(gen):
    c = ContractSpec("CAT", 30.0, 60.0)
    assert cat_futures_vol(gen.with_(sigma=0.0), (0.0, 24.0), c)(10.0) == 0.0
    flat = gen.with_(beta=BetaCurve(-1e-9))
    curve = FrozenCurve(flat, 0.0, 24.0)
    got = cat_futures_vol(flat, (0.0, 24.0), c)(12.0)
    assert got == pytest.approx(flat.sigma * float(curve(12.0)) * 30.0, rel=1e-6)
    vols = [cat_futures_vol(gen.with_(beta=BetaCurve(b)), (0.0, 24.0), c)(5.0) for b in (-0.05, -0.1, -0.2, -0.4)]
    assert all(a > b for a, b in zip(vols, vols[1:]))


def test_cat_option_limits(gen):
    state = (0.0, 25.0)
    base = ContractSpec("CAT", 30.0, 60.0, strike=700.0, rate=0.001, exercise=20.0)
    F = cat_futures(gen, state, base).value
    disc = math.exp(-0.001 * 20)
    quiet = gen.with_(sigma=0.0)
    Fq = cat_futures(quiet, state, base).value
    c = ContractSpec("CAT", 30.0, 60.0, strike=Fq - 5, rate=0.001, exercise=20.0)
    assert cat_option(quiet, state, c).value == pytest.approx(disc * 5, rel=1e-12)
    atm = ContractSpec("CAT", 30.0, 60.0, strike=Fq, exercise=20.0)
    assert cat_option(quiet, state, atm).value == 0.0
    deep = ContractSpec("CAT", 30.0, 60.0, strike=F - 1e6, rate=0.001, exercise=20.0)
    assert cat_option(gen, state, deep).value == pytest.approx(disc * 1e6, rel=1e-6)


def test_cat_option_bounds_and_vol_monotone(gen):
    state = (0.0, 25.0)
    prev = -1.0
    for sigma in (0.0, 0.005, 0.01, 0.02, 0.04):
        p = gen.with_(sigma=sigma)
        c = ContractSpec("CAT", 30.0, 60.0, strike=720.0, rate=0.002, exercise=25.0)
        F = cat_futures(p, state, c).value
        v = cat_option(p, state, c).value
        assert v >= math.exp(-0.002 * 25) * max(F - 720.0, 0.0) - 1e-12
        if sigma > 0 and p.lam == 0:
            assert v >= prev
        prev = v
    # sweep of Sigma through sigma with lam = 0 so F stays fixed
    vals = [cat_option(gen.with_(sigma=s, lam=0.0), state,
                       ContractSpec("CAT", 30.0, 60.0, strike=720.0, exercise=25.0)).value
            for s in (0.0, 0.005, 0.01, 0.02)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_cat_futures_martingale(gen):
    t, T_t, tn = 0.0, 25.0, 20.0
    c = ContractSpec("CAT", 30.0, 60.0)
    F0 = cat_futures(gen, (t, T_t), c).value
    ps = simulate(gen, t, tn, 0.5, 100_000, measure="Q", seed=8, T0=T_t, dynamics="frozen")
    a, b = cat_futures_affine(gen, tn, 30.0, 60.0, FrozenCurve(gen, t, T_t))
    Fn = a + b * ps.paths[:, -1]
    se = Fn.std(ddof=1) / math.sqrt(len(Fn))
    assert abs(Fn.mean() - F0) <= 3 * se


def test_gdd_deep_otm(gen):
    t, T_t = 0.0, 25.0
    curve = FrozenCurve(gen, t, T_t)
    xs = np.linspace(30, 60, 301)
    C = float(np.max(gen.S(xs))) + 10 * gen.sigma * float(np.max(curve(xs))) * math.sqrt(60.0)
    assert gdd_futures(gen, (t, T_t), ContractSpec("GDD", 30.0, 60.0, threshold=C)).value < 1e-4


def test_gdd_degenerates_to_cat(gen):
    state = (0.0, 25.0)
    cat = cat_futures(gen, state, ContractSpec("CAT", 30.0, 60.0)).value
    gdd = gdd_futures(gen, state, ContractSpec("GDD", 30.0, 60.0, threshold=-1000.0)).value
    assert abs(gdd - (cat + 1000 * 30)) / cat <= 1e-3


def test_gdd_sigma_zero_continuity():
    p = ModelParams(SeasonalParams(24, 0, 2.0, 0.0), BetaCurve(-0.2), 0.0)
    c = ContractSpec("GDD", 0.0, 365.0, threshold=24.0)
    got = gdd_futures(p, (0.0, 24.0), c).value
    # 2 sin(wt) above zero for half a year: integral 2 * 365 / pi
    assert got == pytest.approx(2 * 365 / math.pi, rel=1e-4)


def test_gdd_jensen_lower_bound_sweep():
    rng = np.random.default_rng(3)
    for _ in range(6):
        p = random_params(rng)
        state = (0.0, float(p.S(0.0)) + rng.normal())
        cat = cat_futures(p, state, ContractSpec("CAT", 10.0, 50.0)).value
        for C in np.linspace(15, 35, 5):
            gdd = gdd_futures(p, state, ContractSpec("GDD", 10.0, 50.0, threshold=C)).value
            assert gdd >= max(0.0, cat - C * 40) - 1e-7 * cat


def test_gdd_vol_limits_and_bounds(gen):
    state = (0.0, 25.0)
    cat = ContractSpec("CAT", 30.0, 60.0)
    sigma_cat = float(cat_futures_vol(gen, state, cat)(0.0))
    low = gdd_futures_vol(gen, state, ContractSpec("GDD", 30.0, 60.0, threshold=-1000.0))
    assert low == pytest.approx(sigma_cat, rel=1e-6)
    assert gdd_futures_vol(gen, state, ContractSpec("GDD", 30.0, 60.0, threshold=1000.0)) == pytest.approx(0.0, abs=1e-12)
    for C in np.linspace(15, 35, 9):
        v = gdd_futures_vol(gen, state, ContractSpec("GDD", 30.0, 60.0, threshold=C))
        assert -1e-12 <= v <= sigma_cat * (1 + 1e-9)


def test_gdd_option_zero_strike(gen):
    state = (0.0, 25.0)
    c = ContractSpec("GDD", 30.0, 60.0, threshold=23.0, strike=0.0, rate=0.001, exercise=15.0)
    rep = gdd_option(gen, state, c, n=100_000, seed=1)
    fwd = gdd_futures(gen, state, c).value * math.exp(-0.001 * 15)
    assert rep.method == "mc" and rep.std_error > 0
    assert abs(rep.value - fwd) <= 3 * rep.std_error


def test_gdd_option_sigma_zero_exact(gen):
    p = gen.with_(sigma=0.0)
    state = (0.0, 25.0)
    fut = gdd_futures(p, state, ContractSpec("GDD", 30.0, 60.0, threshold=23.0)).value
    c = ContractSpec("GDD", 30.0, 60.0, threshold=23.0, strike=fut - 3, rate=0.01, exercise=10.0)
    rep = gdd_option(p, state, c, n=1000)
    assert rep.std_error == 0.0 and rep.value == pytest.approx(3 * math.exp(-0.1), rel=1e-9)


def test_gdd_option_monotone_in_strike(gen):
    state = (0.0, 25.0)
    vals = [gdd_option(gen, state, ContractSpec("GDD", 30.0, 60.0, threshold=23.0, strike=k, exercise=15.0),
                       n=20_000, seed=4).value for k in np.linspace(20, 80, 13)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_price_dispatch(gen):
    state = (0.0, 25.0)
    assert price(gen, state, ContractSpec("CAT", 30, 60)).method == "closed-form"
    assert price(gen, state, ContractSpec("GDD", 30, 60, threshold=24)).method == "closed-form"
    assert price(gen, state, ContractSpec("CAT", 30, 60, strike=700, exercise=10)).method == "closed-form"
    rep = price(gen, state, ContractSpec("GDD", 30, 60, threshold=24, strike=5, exercise=10), n=500)
    assert rep.method == "mc" and "std_error" in rep.to_dict()
