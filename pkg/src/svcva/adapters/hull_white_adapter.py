"""
Hull-White stochastic volatility call, by the first-order expansion in the
asset/volatility correlation: U ~ g0 + eta * g1.

g0 is a Black price at the integrated second moment of Y; g1 carries the
fourth-moment kernel int_t^T int_s^T c E[Y_s^2 Y_u^2] du ds, which is in
closed form for constant b and c.
"""

from __future__ import annotations

import math
from typing import Optional

from scipy.stats import norm

from svcva.adapters.black_adapter import PriceAndGreeks, black_call
from svcva.core.errors import DomainError
from svcva.core.params import HullWhiteParams, MarketState
from svcva.core.quadrature import QuadratureConfig

_HX = 1e-4
_HY_REL = 1e-5
_H2 = 1e-3
_SMALL = 1e-6


def _expm1_over(r: float, tau: float) -> float:
    """int_0^tau e^{r s} ds."""
    if abs(r * tau) < _SMALL:
        return tau * (1.0 + 0.5 * r * tau)
    return math.expm1(r * tau) / r


def _fourth_moment_kernel(big_a: float, a: float, tau: float) -> float:
    """int_0^tau e^{A s} int_s^tau e^{a(u-s)} du ds."""
    if abs(a * tau) < _SMALL:
        if abs(big_a * tau) < _SMALL:
            return 0.5 * tau * tau
        return (_expm1_over(big_a, tau) - tau) / big_a
    return (math.exp(a * tau) * _expm1_over(big_a - a, tau) - _expm1_over(big_a, tau)) / a


def _price(x: float, y: float, kappa: float, tau: float, hw: HullWhiteParams, eta: float) -> float:
    b, c = hw.b, hw.c
    a = 2.0 * b + c * c
    big_a = 4.0 * b + 6.0 * c * c
    gamma_int = _expm1_over(a, tau)
    total_var = y * y * gamma_int

    g0 = black_call(x, kappa, math.sqrt(total_var / tau), tau).u
    if eta == 0.0:
        return g0

    d2 = ((x - kappa) - 0.5 * total_var) / (y * math.sqrt(gamma_int))
    kernel = c * y**4 * _fourth_moment_kernel(big_a, a, tau)
    g1 = -(math.exp(kappa) / y) * d2 * norm.pdf(d2) / total_var * kernel
    return g0 + eta * float(g1)


def hw_call(
    state: MarketState,
    hw: HullWhiteParams,
    eta: float,
    quad: Optional[QuadratureConfig] = None,
) -> PriceAndGreeks:
    if eta > 0.0:
        raise DomainError(f"Hull-White expansion is set up for eta <= 0, got {eta}")
    x, y, kappa, tau = state.x, state.y, state.kappa, state.tau

    def u(xv: float, yv: float) -> float:
        return _price(xv, yv, kappa, tau, hw, eta)

    hy = _HY_REL * y
    hxx = _H2
    hxy = _H2 * y
    u0 = u(x, y)
    return PriceAndGreeks(
        u=max(u0, 0.0),
        ux=(u(x + _HX, y) - u(x - _HX, y)) / (2.0 * _HX),
        uy=(u(x, y + hy) - u(x, y - hy)) / (2.0 * hy),
        uxx=(u(x + hxx, y) - 2.0 * u0 + u(x - hxx, y)) / (hxx * hxx),
        uxy=(
            u(x + hxx, y + hxy)
            - u(x + hxx, y - hxy)
            - u(x - hxx, y + hxy)
            + u(x - hxx, y - hxy)
        )
        / (4.0 * hxx * hxy),
        vol=math.sqrt(y * y * _expm1_over(2.0 * hw.b + hw.c**2, tau) / tau),
    )
