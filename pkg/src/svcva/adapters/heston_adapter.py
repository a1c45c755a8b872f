"""
Heston call price and Greeks by Fourier inversion, plus the lognormal
moment match of the CIR variance used by the Heston CVA formulas.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from svcva.adapters.black_adapter import PriceAndGreeks
from svcva.core.errors import DomainError, NumericalError, QuadratureError
from svcva.core.params import HestonParams, MarketState
from svcva.core.quadrature import QuadratureConfig, gauss_legendre

ArrayLike = Union[float, np.ndarray]

DECAY_TOL = 1e-12
_SERIES_G = 1e-4
_MAX_EXTENSIONS = 3

logger = logging.getLogger(__name__)


def _cf_terms(
    zeta: np.ndarray, j: int, tau: float, heston: HestonParams, eta: float
) -> Tuple[np.ndarray, np.ndarray]:
    """(C_j, D_j) of f_j = exp(C_j + D_j y + i zeta x), little-trap form.

    Written through A = 2 u_j i zeta - zeta^2 and (b + d) so nothing is
    divided by c^2; the log term falls back to its power series when g is
    small, which makes c -> 0 exact.
    """
    k, theta, c = heston.k, heston.theta, heston.c
    u_j, delta_j = (0.5, 1.0) if j == 1 else (-0.5, 0.0)
    iz = 1j * zeta
    b = k - eta * c * (delta_j + iz)
    big_a = 2.0 * u_j * iz - zeta * zeta
    d = np.sqrt(b * b - c * c * big_a)
    bpd = b + d
    g_over_c2 = big_a / (bpd * bpd)
    g = c * c * g_over_c2
    e = np.exp(-d * tau)

    D = big_a / bpd * (1.0 - e) / (1.0 - g * e)

    small = np.abs(g) < _SERIES_G
    log_term = np.empty_like(b)
    if np.any(small):
        gs, es, g2 = g[small], e[small], g_over_c2[small]
        acc = np.zeros_like(gs)
        gp = np.ones_like(gs)
        ep = np.ones_like(es)
        for n in range(1, 6):
            ep = ep * es
            acc = acc + gp * (1.0 - ep) / n
            gp = gp * gs
        log_term[small] = g2 * acc
    big = ~small
    if np.any(big):
        log_term[big] = np.log((1.0 - g[big] * e[big]) / (1.0 - g[big])) / (c * c)

    C = k * theta * (big_a / bpd * tau - 2.0 * log_term)
    return C, D


def _integrands(state: MarketState, heston: HestonParams, eta: float):
    x, y, kappa, tau = state.x, state.y, state.kappa, state.tau

    def fn(zeta: np.ndarray) -> np.ndarray:
        rows = []
        iz = 1j * zeta
        for j in (1, 2):
            C, D = _cf_terms(zeta, j, tau, heston, eta)
            base = np.exp(C + D * y + iz * (x - kappa))
            rows.extend(
                [
                    (base / iz).real,
                    base.real,
                    (base * D / iz).real,
                    (base * iz).real,
                    (base * D).real,
                ]
            )
        return np.vstack(rows) / math.pi

    return fn


def _envelope(state: MarketState, heston: HestonParams, eta: float, zeta: float) -> float:
    z = np.array([zeta])
    mags = []
    for j in (1, 2):
        C, D = _cf_terms(z, j, state.tau, heston, eta)
        mags.append(float(np.abs(np.exp(C + D * state.y))[0]))
    return max(mags)


def _fourier_limit(
    state: MarketState, heston: HestonParams, eta: float, upper: float
) -> float:
    """Smallest of upper, 2*upper, 4*upper, 8*upper where |f_j| is below DECAY_TOL."""
    limit = upper
    for _ in range(_MAX_EXTENSIONS + 1):
        mag = _envelope(state, heston, eta, limit)
        if mag < DECAY_TOL:
            if limit > upper:
                logger.debug("Heston Fourier limit extended to %g", limit)
            return limit
        limit *= 2.0
    raise QuadratureError(
        f"Heston characteristic function is still {mag:.3g} at zeta={limit / 2.0:g}; "
        "raise quad.upper_limit"
    )


def _fourier(
    state: MarketState, heston: HestonParams, eta: float, quad: QuadratureConfig
) -> np.ndarray:
    if state.tau <= 0.0:
        raise DomainError("Heston pricing needs T > t")
    upper = _fourier_limit(state, heston, eta, quad.upper_limit)
    vals = gauss_legendre(
        _integrands(state, heston, eta),
        upper,
        n_nodes=quad.n_nodes,
        tol=quad.tol,
        max_panels=quad.max_panels,
    )
    vals[0] += 0.5
    vals[5] += 0.5
    return vals


def heston_probabilities(
    state: MarketState,
    heston: HestonParams,
    eta: float,
    quad: Optional[QuadratureConfig] = None,
) -> Tuple[float, float]:
    v = _fourier(state, heston, eta, quad or QuadratureConfig())
    return float(v[0]), float(v[5])


def heston_call_and_greeks(
    state: MarketState,
    heston: HestonParams,
    eta: float,
    quad: Optional[QuadratureConfig] = None,
) -> PriceAndGreeks:
    v = _fourier(state, heston, eta, quad or QuadratureConfig())
    p1, p1x, p1y, p1xx, p1xy = v[:5]
    p2, p2x, p2y, p2xx, p2xy = v[5:]
    ex, ek = math.exp(state.x), math.exp(state.kappa)
    u = ex * p1 - ek * p2
    return PriceAndGreeks(
        u=float(max(u, 0.0)),
        ux=float(ex * (p1 + p1x) - ek * p2x),
        uy=float(ex * p1y - ek * p2y),
        uxx=float(ex * (p1 + 2.0 * p1x + p1xx) - ek * p2xx),
        uxy=float(ex * (p1y + p1xy) - ek * p2xy),
    )


# ---- lognormal match of the CIR variance ------------------------------------


class LognormalMatch(NamedTuple):
    gamma1: ArrayLike
    gamma2sq: ArrayLike
    e_sqrt_y: ArrayLike
    e_y: ArrayLike
    e_y2: ArrayLike


def cir_lognormal_match(
    k: float, theta: float, c: float, y: float, t: float, s: ArrayLike
) -> LognormalMatch:
    """
    Match the first two moments of the CIR variance with a lognormal process
    dY = gamma1 Y ds + gamma2 Y dB, and report E[sqrt(Y_s)] under it.

    The gamma integrals are taken through their antiderivatives
    ln(m1/y) and ln(m2/m1^2).
    """
    if not y > 0.0:
        raise DomainError(f"variance y must be > 0, got {y}")
    s_a = np.asarray(s, dtype=float)
    h = s_a - t
    if np.any(h < 0.0):
        raise DomainError(f"need s >= t, got t={t}, s={s}")

    e = np.exp(-k * h)
    dy = y - theta
    r = c * c / k
    a2 = dy * dy - r * (y - 0.5 * theta)
    a1 = dy * (2.0 * theta + r)
    a0 = theta * (theta + 0.5 * r)

    m1 = theta + dy * e
    m2 = a2 * e * e + a1 * e + a0
    dm1 = -k * dy * e
    dm2 = -2.0 * k * a2 * e * e - k * a1 * e

    gamma1 = dm1 / m1
    gamma2sq = dm2 / m2 - 2.0 * gamma1
    if np.any(gamma2sq < -1e-12):
        raise NumericalError(
            f"matched lognormal variance rate went negative ({np.min(gamma2sq):.3g})"
        )
    gamma2sq = np.maximum(gamma2sq, 0.0)

    spread = np.maximum(m2 / (m1 * m1), 1.0)
    e_sqrt_y = np.sqrt(m1) * spread ** (-0.125)

    def out(a: np.ndarray) -> ArrayLike:
        return float(a) if np.ndim(s) == 0 else a

    return LognormalMatch(out(gamma1), out(gamma2sq), out(e_sqrt_y), out(m1), out(m2))
