from __future__ import annotations

import math
from typing import Callable, Optional

from scipy.stats import norm

from svcva.adapters.black_adapter import PriceAndGreeks, black_call, black_d1
from svcva.core.errors import NumericalError
from svcva.core.params import MarketState, SabrParams
from svcva.core.quadrature import QuadratureConfig

ATM_THRESHOLD = 1e-6
_REL_STEP = 1e-6
_OUTER_STEP = 1e-4


def _ratio(m: float, eta: float) -> float:
    """m / delta(m), with its series near m = 0."""
    if abs(m) < ATM_THRESHOLD:
        return 1.0 - 0.5 * eta * m + (2.0 - 3.0 * eta * eta) * m * m / 12.0
    a = 1.0 - eta * eta
    w = m - eta
    r = math.sqrt(w * w + a)
    if abs(m) < 1.0:
        # num/(1-eta) - 1 without cancellation: r - 1 = m(m - 2 eta)/(r + 1)
        delta = math.log1p((m + m * (m - 2.0 * eta) / (r + 1.0)) / (1.0 - eta))
    else:
        num = (w + r) if w >= 0.0 else a / (r - w)
        delta = math.log(num / (1.0 - eta))
    if delta == 0.0:
        raise NumericalError(f"delta(m) vanished at m={m}, eta={eta}")
    return m / delta


def _vol(x: float, y: float, kappa: float, tau: float, sabr: SabrParams, eta: float) -> float:
    g1 = 1.0 - sabr.gamma
    c = sabr.c
    z = x - kappa
    fav = math.exp(0.5 * (x + kappa) * g1)
    m = (c / y) * fav * z
    g1z2 = (g1 * z) ** 2
    denom = fav * (1.0 + g1z2 / 24.0 + g1z2 * g1z2 / 1920.0)
    corr = 1.0 + (
        g1 * g1 * y * y / (24.0 * fav * fav)
        + eta * sabr.gamma * c * y / (4.0 * fav)
        + (2.0 - 3.0 * eta * eta) * c * c / 24.0
    ) * tau
    return y / denom * _ratio(m, eta) * corr


def sabr_implied_vol(state: MarketState, sabr: SabrParams, eta: float) -> float:
    """Truncated Hagan lognormal volatility for the CEV/SABR dynamics in log-price."""
    return _vol(state.x, state.y, state.kappa, state.tau, sabr, eta)


def _richardson(diff: Callable[[float], float], h: float) -> float:
    return (4.0 * diff(0.5 * h) - diff(h)) / 3.0


def _central(f: Callable[[float], float], at: float, h: float) -> float:
    return _richardson(lambda k: (f(at + k) - f(at - k)) / (2.0 * k), h)


def sabr_call_and_greeks(
    state: MarketState,
    sabr: SabrParams,
    eta: float,
    quad: Optional[QuadratureConfig] = None,
) -> PriceAndGreeks:
    tau, kappa = state.tau, state.kappa
    sqrt_tau = math.sqrt(tau)

    def vol_at(x: float, y: float) -> float:
        return _vol(x, y, kappa, tau, sabr, eta)

    def ux_at(x: float, y: float) -> float:
        v = vol_at(x, y)
        dvx = _central(lambda s: vol_at(s, y), x, _REL_STEP * max(1.0, abs(x)))
        d1 = black_d1(x, kappa, v, tau)
        return math.exp(x) * (norm.cdf(d1) + sqrt_tau * norm.pdf(d1) * dvx)

    x, y = state.x, state.y
    vol = vol_at(x, y)
    base = black_call(x, kappa, vol, tau)
    dvy = _central(lambda s: vol_at(x, s), y, _REL_STEP * y)
    d1 = black_d1(x, kappa, vol, tau)

    hx = _OUTER_STEP * max(1.0, abs(x))
    hy = _OUTER_STEP * y
    ux = ux_at(x, y)
    return PriceAndGreeks(
        u=base.u,
        ux=ux,
        uy=float(sqrt_tau * math.exp(x) * norm.pdf(d1) * dvy),
        uxx=(ux_at(x + hx, y) - ux_at(x - hx, y)) / (2.0 * hx),
        uxy=(ux_at(x, y + hy) - ux_at(x, y - hy)) / (2.0 * hy),
        vol=vol,
    )
