from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from scipy.stats import norm


@dataclass(frozen=True)
class PriceAndGreeks:
    """Default-free call price U(t,x,y) with its first and mixed partials."""

    u: float
    ux: float
    uy: float
    uxx: Optional[float] = None
    uxy: Optional[float] = None
    vol: Optional[float] = None


def black_call(x: float, kappa: float, vol: float, tau: float) -> PriceAndGreeks:
    """
    Black call on S = e^x with strike e^kappa and zero rate.

    Here ``uy`` and ``uxy`` are taken with respect to ``vol`` (vega and
    d(ux)/d(vol)).
    """
    ex, ek = math.exp(x), math.exp(kappa)
    sd = vol * math.sqrt(tau) if tau > 0.0 else 0.0
    if sd <= 0.0:
        itm = x > kappa
        return PriceAndGreeks(
            u=max(ex - ek, 0.0),
            ux=ex if itm else 0.0,
            uy=0.0,
            uxx=ex if itm else 0.0,
            uxy=0.0,
            vol=vol,
        )
    d1 = (x - kappa) / sd + 0.5 * sd
    d2 = d1 - sd
    n1, pdf1 = norm.cdf(d1), norm.pdf(d1)
    u = ex * n1 - ek * norm.cdf(d2)
    ux = ex * n1
    return PriceAndGreeks(
        u=max(float(u), 0.0),
        ux=float(ux),
        uy=float(ex * pdf1 * math.sqrt(tau)),
        uxx=float(ux + ex * pdf1 / sd),
        uxy=float(-ex * pdf1 * d2 / vol),
        vol=vol,
    )


def black_d1(x: float, kappa: float, vol: float, tau: float) -> float:
    sd = vol * math.sqrt(tau)
    return (x - kappa) / sd + 0.5 * sd
