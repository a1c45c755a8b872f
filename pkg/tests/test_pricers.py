import math
import pathlib
import sys
import warnings

import numpy as np
import pytest
from scipy.stats import norm

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from svcva.adapters.black_adapter import black_call
from svcva.adapters.heston_adapter import (
    cir_lognormal_match,
    heston_call_and_greeks,
    heston_probabilities,
)
from svcva.adapters.hull_white_adapter import hw_call
from svcva.adapters.sabr_adapter import sabr_call_and_greeks, sabr_implied_vol
from svcva.core.errors import DomainError, QuadratureError
from svcva.core.params import HestonParams, HullWhiteParams, MarketState, SabrParams
from svcva.core.quadrature import QuadratureConfig

SABR = SabrParams(gamma=0.7367, c=0.7356)
KAPPA = math.log(1.15)


def _state(x=0.0, y=0.5887, T=0.5, kappa=KAPPA):
    return MarketState(t=0.0, T=T, x=x, y=y, kappa=kappa)


# ---- Black ------------------------------------------------------------------


def test_black_at_the_money():
    g = black_call(0.0, 0.0, 0.2, 1.0)
    assert g.u == pytest.approx(norm.cdf(0.1) - norm.cdf(-0.1), abs=1e-14)
    assert g.ux == pytest.approx(norm.cdf(0.1))


def test_black_greeks_against_differences():
    h = 1e-5
    g = black_call(0.1, KAPPA, 0.3, 0.5)
    up, dn = black_call(0.1 + h, KAPPA, 0.3, 0.5), black_call(0.1 - h, KAPPA, 0.3, 0.5)
    assert g.ux == pytest.approx((up.u - dn.u) / (2 * h), rel=1e-7)
    assert g.uxx == pytest.approx((up.ux - dn.ux) / (2 * h), rel=1e-6)
    vu, vd = black_call(0.1, KAPPA, 0.3 + h, 0.5), black_call(0.1, KAPPA, 0.3 - h, 0.5)
    assert g.uy == pytest.approx((vu.u - vd.u) / (2 * h), rel=1e-7)
    assert g.uxy == pytest.approx((vu.ux - vd.ux) / (2 * h), rel=1e-6)


def test_black_without_volatility_is_intrinsic():
    assert black_call(0.2, 0.0, 0.0, 1.0).u == pytest.approx(math.exp(0.2) - 1.0)
    assert black_call(-0.2, 0.0, 0.3, 0.0).u == 0.0


# ---- SABR -------------------------------------------------------------------


def test_sabr_vol_tends_to_local_vol_at_the_money():
    st = MarketState(t=0.0, T=1e-6, x=0.0, y=0.5887, kappa=0.0)
    assert sabr_implied_vol(st, SABR, -0.3) == pytest.approx(0.5887, rel=1e-5)


def test_sabr_vol_continuous_across_atm_series():
    near = MarketState(t=0.0, T=0.5, x=0.0, y=0.5887, kappa=1e-7)
    far = MarketState(t=0.0, T=0.5, x=0.0, y=0.5887, kappa=1e-5)
    assert sabr_implied_vol(near, SABR, -0.3) == pytest.approx(
        sabr_implied_vol(far, SABR, -0.3), rel=1e-4
    )


def test_sabr_greeks_against_price_differences():
    g = sabr_call_and_greeks(_state(), SABR, -0.3)
    hx, hy = 1e-4, 1e-4
    ux_fd = (
        sabr_call_and_greeks(_state(x=hx), SABR, -0.3).u
        - sabr_call_and_greeks(_state(x=-hx), SABR, -0.3).u
    ) / (2 * hx)
    uy_fd = (
        sabr_call_and_greeks(_state(y=0.5887 + hy), SABR, -0.3).u
        - sabr_call_and_greeks(_state(y=0.5887 - hy), SABR, -0.3).u
    ) / (2 * hy)
    assert g.ux == pytest.approx(ux_fd, rel=1e-5)
    assert g.uy == pytest.approx(uy_fd, rel=1e-5)
    assert 0.0 < g.u < 1.0
    assert g.uxx > 0.0


# ---- Heston -----------------------------------------------------------------


def test_heston_without_vol_of_vol_is_black():
    k, theta, y, T = 2.0, 0.04, 0.06, 1.0
    st = MarketState(t=0.0, T=T, x=0.0, y=y, kappa=0.05)
    g = heston_call_and_greeks(st, HestonParams(k=k, theta=theta, c=1e-4), 0.0)
    total_var = theta * T + (y - theta) * (1.0 - math.exp(-k * T)) / k
    ref = black_call(0.0, 0.05, math.sqrt(total_var / T), T)
    assert g.u == pytest.approx(ref.u, abs=1e-6)
    assert g.ux == pytest.approx(ref.ux, abs=1e-5)


@pytest.mark.filterwarnings("ignore::svcva.core.errors.FellerConditionWarning")
def test_heston_fitted_set_prices():
    heston = HestonParams(k=1.0, theta=0.04, c=0.39)
    st = _state(y=0.034)
    g = heston_call_and_greeks(st, heston, -0.34)
    assert max(1.0 - 1.15, 0.0) < g.u < 1.0
    p1, p2 = heston_probabilities(st, heston, -0.34)
    assert 0.0 < p2 < p1 < 1.0
    h = 1e-3
    up = heston_call_and_greeks(_state(x=h, y=0.034), heston, -0.34)
    dn = heston_call_and_greeks(_state(x=-h, y=0.034), heston, -0.34)
    assert g.ux == pytest.approx((up.u - dn.u) / (2 * h), abs=1e-4)
    assert g.uxx == pytest.approx((up.ux - dn.ux) / (2 * h), abs=1e-3)


@pytest.mark.filterwarnings("ignore::svcva.core.errors.FellerConditionWarning")
def test_heston_slow_decay_raises():
    heston = HestonParams(k=1.0, theta=0.04, c=0.39)
    st = MarketState(t=0.0, T=0.01, x=0.0, y=0.034, kappa=KAPPA)
    with pytest.raises(QuadratureError):
        heston_call_and_greeks(st, heston, -0.34, QuadratureConfig(upper_limit=1.0))


def test_lognormal_match_moments():
    k, theta, c, y = 1.0, 0.04, 0.2, 0.09
    start = cir_lognormal_match(k, theta, c, y, 0.0, 0.0)
    assert start.e_y == pytest.approx(y)
    assert start.e_y2 == pytest.approx(y * y)
    late = cir_lognormal_match(k, theta, c, y, 0.0, 40.0)
    assert late.e_y == pytest.approx(theta, rel=1e-9)
    # stationary variance of CIR
    assert late.e_y2 - late.e_y**2 == pytest.approx(theta * c * c / (2 * k), rel=1e-6)


def test_lognormal_match_sqrt_below_jensen():
    s = np.linspace(0.0, 2.0, 21)
    m = cir_lognormal_match(1.0, 0.04, 0.39, 0.034, 0.0, s)
    assert np.all(np.asarray(m.e_sqrt_y) <= np.sqrt(np.asarray(m.e_y)) + 1e-15)
    assert np.all(np.asarray(m.gamma2sq) >= 0.0)
    with pytest.raises(DomainError):
        cir_lognormal_match(1.0, 0.04, 0.39, 0.0, 0.0, 1.0)


# ---- Hull-White -------------------------------------------------------------


def test_hw_without_correlation_is_black_at_mean_variance():
    hw = HullWhiteParams(b=0.1, c=0.3)
    y, T = 0.2, 1.0
    a = 2 * hw.b + hw.c**2
    vol = math.sqrt(y * y * math.expm1(a * T) / (a * T))
    g = hw_call(MarketState(t=0.0, T=T, x=0.0, y=y, kappa=0.0), hw, 0.0)
    assert g.u == pytest.approx(black_call(0.0, 0.0, vol, T).u, rel=1e-12)
    assert g.vol == pytest.approx(vol)


def test_hw_negative_correlation_lowers_out_of_the_money_call():
    hw = HullWhiteParams(b=0.0, c=0.3)
    st = MarketState(t=0.0, T=1.0, x=0.0, y=0.2, kappa=0.2)
    assert hw_call(st, hw, -0.5).u < hw_call(st, hw, 0.0).u
    assert 0.0 < hw_call(st, hw, -0.5).ux < 1.0


def test_hw_positive_eta_rejected():
    with pytest.raises(DomainError):
        hw_call(_state(y=0.2), HullWhiteParams(b=0.0, c=0.3), 0.2)


# ---- Greeks against differences ---------------------------------------------


def _derivative(f, at, h):
    """Central difference with one Richardson step."""

    def central(k):
        return (f(at + k) - f(at - k)) / (2.0 * k)

    return (4.0 * central(0.5 * h) - central(h)) / 3.0


with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    HESTON = HestonParams(k=1.0, theta=0.04, c=0.39)
FINE = QuadratureConfig(tol=1e-11)


def test_heston_greeks_against_differences():
    y0 = 0.034

    def greeks(x=0.0, y=y0):
        return heston_call_and_greeks(_state(x=x, y=y), HESTON, -0.34, FINE)

    g = greeks()
    assert g.ux == pytest.approx(_derivative(lambda x: greeks(x=x).u, 0.0, 2e-3), rel=1e-4)
    assert g.uy == pytest.approx(_derivative(lambda y: greeks(y=y).u, y0, 2e-3), rel=1e-4)
    assert g.uxx == pytest.approx(_derivative(lambda x: greeks(x=x).ux, 0.0, 2e-3), rel=1e-4)
    assert g.uxy == pytest.approx(_derivative(lambda y: greeks(y=y).ux, y0, 2e-3), rel=1e-4)
    assert g.uy > 0.0


def test_sabr_cross_greeks_against_differences():
    y0 = 0.5887
    g = sabr_call_and_greeks(_state(), SABR, -0.3)

    def ux(x=0.0, y=y0):
        return sabr_call_and_greeks(_state(x=x, y=y), SABR, -0.3).ux

    assert g.uxx == pytest.approx(_derivative(lambda x: ux(x=x), 0.0, 1e-3), rel=1e-3)
    assert g.uxy == pytest.approx(_derivative(lambda y: ux(y=y), y0, 1e-3), rel=1e-3)


def test_hw_greeks_against_differences():
    hw = HullWhiteParams(b=0.05, c=0.3)
    y0 = 0.2

    def greeks(x=0.0, y=y0):
        return hw_call(MarketState(t=0.0, T=1.0, x=x, y=y, kappa=0.1), hw, -0.3)

    g = greeks()
    assert g.ux == pytest.approx(_derivative(lambda x: greeks(x=x).u, 0.0, 1e-2), rel=1e-4)
    assert g.uy == pytest.approx(_derivative(lambda y: greeks(y=y).u, y0, 1e-2), rel=1e-4)
    assert g.uxx == pytest.approx(_derivative(lambda x: greeks(x=x).ux, 0.0, 1e-2), rel=1e-4)
    assert g.uxy == pytest.approx(_derivative(lambda y: greeks(y=y).ux, y0, 1e-2), rel=1e-4)


@pytest.mark.parametrize("strike", [0.9, 1.0, 1.15])
@pytest.mark.parametrize("T", [0.5, 1.0])
def test_heston_probabilities_and_price_bounds(strike, T):
    st = _state(y=0.034, T=T, kappa=math.log(strike))
    p1, p2 = heston_probabilities(st, HESTON, -0.34)
    for p in (p1, p2):
        assert -1e-6 <= p <= 1.0 + 1e-6
    u = heston_call_and_greeks(st, HESTON, -0.34).u
    assert max(1.0 - strike, 0.0) <= u <= 1.0
