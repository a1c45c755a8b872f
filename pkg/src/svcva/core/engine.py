"""
CVA of a vulnerable call (R = 0) by expansion in the correlation between the
underlying and the default intensity.

    CVA = (1 - N^t_t) U  +  first-order terms in (rho, nu)  [+ (rho*sigma)^2 term]

Every correction is an integral over [t, T] of phi(T-s) against a
survival-weighted expectation; phi <= 0, so with the Ito sign dN = +N phi dM
a positive rho (wrong-way risk) raises the CVA.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from svcva.adapters.black_adapter import PriceAndGreeks
from svcva.adapters.heston_adapter import cir_lognormal_match, heston_call_and_greeks
from svcva.adapters.hull_white_adapter import hw_call
from svcva.adapters.sabr_adapter import sabr_call_and_greeks
from svcva.core.errors import PairingError, UnsupportedPairingError
from svcva.core.intensity import (
    Convention,
    affine_factors,
    expect_N_lam_profile,
    expect_N_sqrtlam_profile,
    expect_NY_hw_vasicek,
    expect_NY_sabr_vasicek,
    survival_factor,
)
from svcva.core.params import (
    CorrelationTriple,
    HestonParams,
    HullWhiteParams,
    IntensityParams,
    MarketState,
    ModelPairing,
    SabrParams,
    validate_correlations,
)
from svcva.core.quadrature import (
    QuadratureConfig,
    cumulative,
    integrate,
    iterated,
    time_grid,
)

logger = logging.getLogger(__name__)

HwGrowth = Literal["median", "mean"]
Order = Literal["first", "second"]


@dataclass(frozen=True)
class CvaResult:
    pairing: str
    order: Order
    cva0: float
    cva1: float
    cva2: Optional[float]
    total: float
    price: PriceAndGreeks
    survival: float

    def to_dict(self) -> dict:
        return {
            "pairing": self.pairing,
            "order": self.order,
            "cva0": self.cva0,
            "cva1": self.cva1,
            "cva2": self.cva2,
            "total": self.total,
            "price": self.price.u,
            "survival": self.survival,
        }


@dataclass(frozen=True)
class FirstOrderTerms:
    """Pieces of the first-order formula for one (pairing, state, nu).

    The correction is ``rho * rho_coef + nu_term``; ``nu`` enters the
    Vasicek expectations too, so only the rho dependence is kept symbolic.
    """

    cva0: float
    rho_coef: float
    nu_term: float
    price: PriceAndGreeks
    survival: float


@dataclass(frozen=True)
class SecondOrderTerms:
    cva0: float
    c1: float
    c2: float
    sigma: float
    price: PriceAndGreeks
    survival: float


# ---- pricing dispatch -------------------------------------------------------


def price_and_greeks(
    pairing: ModelPairing,
    state: MarketState,
    eta: float,
    quad: Optional[QuadratureConfig] = None,
) -> PriceAndGreeks:
    """Default-free call and partials under the pairing's volatility model."""
    vol = pairing.vol
    if isinstance(vol, SabrParams):
        return sabr_call_and_greeks(state, vol, eta, quad)
    if isinstance(vol, HestonParams):
        return heston_call_and_greeks(state, vol, eta, quad)
    if isinstance(vol, HullWhiteParams):
        return hw_call(state, vol, eta, quad)
    raise PairingError(f"no pricer for {type(vol).__name__}")


def _zero_order(
    pairing: ModelPairing,
    state: MarketState,
    eta: float,
    quad: QuadratureConfig,
    price: Optional[PriceAndGreeks],
) -> tuple[float, PriceAndGreeks, float]:
    greeks = price if price is not None else price_and_greeks(pairing, state, eta, quad)
    lam = pairing.intensity
    survival = float(survival_factor(lam, lam.lambda0, state.tau))
    return (1.0 - survival) * greeks.u, greeks, survival


# ---- survival-weighted expectations ----------------------------------------


def expect_N_sqrtY_heston_vasicek(
    vparams: IntensityParams,
    heston: HestonParams,
    y: float,
    nu: float,
    grid: np.ndarray,
    T: float,
) -> np.ndarray:
    """
    E[N^t_s sqrt(Y_s)] on ``grid`` for Heston variance and a Vasicek intensity.

    sqrt(Y) is taken from the lognormal moment match, whose volatility is
    gamma2/2; the cross term with N contributes nu*sigma*int phi*gamma2/2.
    """
    t = float(grid[0])
    match = cir_lognormal_match(heston.k, heston.theta, heston.c, y, t, grid)
    n_tt = float(survival_factor(vparams, vparams.lambda0, T - t))
    phi = np.asarray(affine_factors(vparams, T - grid).phi)
    cross = cumulative(0.5 * np.sqrt(np.asarray(match.gamma2sq)) * phi, grid)
    return n_tt * np.asarray(match.e_sqrt_y) * np.exp(nu * vparams.sigma * cross)


def _hw_expected_vol(hw: HullWhiteParams, y: float, h: np.ndarray, growth: HwGrowth) -> np.ndarray:
    rate = hw.b if growth == "mean" else hw.b - 0.5 * hw.c * hw.c
    return y * np.exp(rate * h)


def _first_order_profile(
    pairing: ModelPairing,
    state: MarketState,
    nu: float,
    grid: np.ndarray,
    *,
    hw_growth: HwGrowth,
    convention: Convention,
) -> np.ndarray:
    lam = pairing.intensity
    vol = pairing.vol
    t, T, y = state.t, state.T, state.y

    if lam.kind == "vasicek":
        if isinstance(vol, SabrParams):
            return np.asarray(expect_NY_sabr_vasicek(lam, vol.c, y, nu, t, grid, T))
        if isinstance(vol, HullWhiteParams):
            return np.asarray(expect_NY_hw_vasicek(lam, vol, y, nu, t, grid, T))
        if isinstance(vol, HestonParams):
            return expect_N_sqrtY_heston_vasicek(lam, vol, y, nu, grid, T)
    else:
        w = expect_N_sqrtlam_profile(lam, grid, T, convention)
        if isinstance(vol, SabrParams):
            return y * w
        if isinstance(vol, HullWhiteParams):
            return w * _hw_expected_vol(vol, y, grid - t, hw_growth)
        if isinstance(vol, HestonParams):
            match = cir_lognormal_match(vol.k, vol.theta, vol.c, y, t, grid)
            return w * np.asarray(match.e_sqrt_y)
    raise PairingError(f"unsupported pairing {pairing.name}")


# ---- first order ------------------------------------------------------------


def first_order_terms(
    pairing: ModelPairing,
    state: MarketState,
    eta: float,
    nu: float = 0.0,
    quad: Optional[QuadratureConfig] = None,
    *,
    price: Optional[PriceAndGreeks] = None,
    hw_growth: HwGrowth = "median",
    convention: Convention = "ito",
) -> FirstOrderTerms:
    quad = quad or QuadratureConfig()
    cva0, greeks, survival = _zero_order(pairing, state, eta, quad, price)

    grid = time_grid(state.t, state.T, quad.dt)
    phi = np.asarray(affine_factors(pairing.intensity, state.T - grid).phi)
    profile = _first_order_profile(
        pairing, state, nu, grid, hw_growth=hw_growth, convention=convention
    )
    weight = integrate(phi * profile, grid)

    sigma = pairing.intensity.sigma
    vol = pairing.vol
    lever = 1.0
    if isinstance(vol, SabrParams):
        lever = math.exp(-(1.0 - vol.gamma) * state.x)

    return FirstOrderTerms(
        cva0=cva0,
        rho_coef=-sigma * greeks.ux * lever * weight,
        nu_term=-sigma * vol.c * nu * greeks.uy * weight,
        price=greeks,
        survival=survival,
    )


def _check_band(result: CvaResult, rho: float) -> None:
    if abs(rho) <= 0.5 and not (0.0 <= result.total <= result.price.u):
        logger.warning(
            "%s %s-order CVA %.6g at rho=%.3g is outside [0, U=%.6g]",
            result.pairing,
            result.order,
            result.total,
            rho,
            result.price.u,
        )


def assemble_first_order(
    pairing: ModelPairing, terms: FirstOrderTerms, rho: float
) -> CvaResult:
    cva1 = rho * terms.rho_coef + terms.nu_term
    result = CvaResult(
        pairing=pairing.name,
        order="first",
        cva0=terms.cva0,
        cva1=cva1,
        cva2=None,
        total=terms.cva0 + cva1,
        price=terms.price,
        survival=terms.survival,
    )
    _check_band(result, rho)
    return result


def cva_first_order(
    pairing: ModelPairing,
    state: MarketState,
    corr: CorrelationTriple,
    quad: Optional[QuadratureConfig] = None,
    *,
    price: Optional[PriceAndGreeks] = None,
    hw_growth: HwGrowth = "median",
    convention: Convention = "ito",
) -> CvaResult:
    validate_correlations(corr)
    terms = first_order_terms(
        pairing,
        state,
        corr.eta,
        corr.nu,
        quad,
        price=price,
        hw_growth=hw_growth,
        convention=convention,
    )
    return assemble_first_order(pairing, terms, corr.rho)


# ---- second order (CIR intensity, nu = 0) ----------------------------------


def _sabr_cir_terms(
    sabr: SabrParams,
    lam: IntensityParams,
    state: MarketState,
    eta: float,
    greeks: PriceAndGreeks,
    grid: np.ndarray,
    n_tt: float,
    reduced_moments: bool,
    convention: Convention,
) -> tuple[float, float]:
    t, T, x, y = state.t, state.T, state.x, state.y
    g1, c = 1.0 - sabr.gamma, sabr.c
    h = grid - t

    def moment(i: int) -> np.ndarray:
        spread = (i - 1) if reduced_moments else i * (i - 1)
        return math.exp(-i * g1 * x) * y**i * np.exp(0.5 * spread * c * c * h)

    f1, f2, f3 = moment(1), moment(2), moment(3)
    phi = np.asarray(affine_factors(lam, T - grid).phi)
    w = expect_N_sqrtlam_profile(lam, grid, T, convention)
    w_lam = expect_N_lam_profile(lam, grid, T, convention)
    ux, uxx, uxy = greeks.ux, greeks.uxx or 0.0, greeks.uxy or 0.0

    c1 = -(
        integrate(phi * ux * f1 * w, grid)
        - g1 * ux * iterated(phi, w * (c * eta * f2 + 0.5 * sabr.gamma * f3), grid)
        + c * eta * uxx * iterated(phi, w * f2, grid)
        + c * c * math.exp(g1 * x) * uxy * iterated(phi, w * f2, grid)
    )
    c2 = -(uxx - g1 * ux) * iterated(phi, f2 * (0.5 * n_tt + phi * w_lam), grid)
    return c1, c2


def _heston_cir_terms(
    heston: HestonParams,
    lam: IntensityParams,
    state: MarketState,
    eta: float,
    greeks: PriceAndGreeks,
    grid: np.ndarray,
    n_tt: float,
    convention: Convention,
) -> tuple[float, float]:
    t, T, y = state.t, state.T, state.y
    k, theta, c = heston.k, heston.theta, heston.c
    q, mu, s2 = lam.q, lam.mu, lam.sigma**2
    lam0 = lam.lambda0

    match = cir_lognormal_match(k, theta, c, y, t, grid)
    e_sqrt_y = np.asarray(match.e_sqrt_y)
    e_y = np.asarray(match.e_y)
    phi = np.asarray(affine_factors(lam, T - grid).phi)
    w = expect_N_sqrtlam_profile(lam, grid, T, convention)
    w_lam = expect_N_lam_profile(lam, grid, T, convention)
    ux, uxx, uxy = greeks.ux, greeks.uxx or 0.0, greeks.uxy or 0.0

    # E[N_s sqrt(lambda_s Y_s)] from its linearised dynamics
    source = (
        (4.0 * q * mu - s2) / (8.0 * math.sqrt(lam0)) * n_tt * e_sqrt_y
        + (
            (4.0 * k * theta - c * c) / (8.0 * math.sqrt(y))
            - 0.5 * (q + k - s2 * phi) * e_sqrt_y
        )
        * w
    )
    joint = n_tt * math.sqrt(lam0 * y) + cumulative(source, grid)

    c1 = -(
        ux * integrate(phi * joint, grid)
        + 0.5 * c * eta * uxx * iterated(phi, e_sqrt_y * w, grid)
        + 0.5 * c * c * uxy * iterated(phi, e_sqrt_y * w, grid)
    )
    c2 = -uxx * iterated(phi, e_y * (0.5 * n_tt + phi * w_lam), grid)
    return c1, c2


def second_order_terms(
    pairing: ModelPairing,
    state: MarketState,
    eta: float,
    quad: Optional[QuadratureConfig] = None,
    *,
    price: Optional[PriceAndGreeks] = None,
    reduced_moments: bool = False,
    convention: Convention = "ito",
) -> SecondOrderTerms:
    lam = pairing.intensity
    vol = pairing.vol
    if lam.kind != "cir" or isinstance(vol, HullWhiteParams):
        raise UnsupportedPairingError(
            f"no second-order formula for {pairing.name}; "
            "available for sabr-cir and heston-cir"
        )
    quad = quad or QuadratureConfig()
    cva0, greeks, survival = _zero_order(pairing, state, eta, quad, price)
    grid = time_grid(state.t, state.T, quad.dt)

    if isinstance(vol, SabrParams):
        c1, c2 = _sabr_cir_terms(
            vol, lam, state, eta, greeks, grid, survival, reduced_moments, convention
        )
    elif isinstance(vol, HestonParams):
        c1, c2 = _heston_cir_terms(vol, lam, state, eta, greeks, grid, survival, convention)
    else:
        raise UnsupportedPairingError(f"no second-order formula for {pairing.name}")

    return SecondOrderTerms(
        cva0=cva0, c1=c1, c2=c2, sigma=lam.sigma, price=greeks, survival=survival
    )


def assemble_second_order(
    pairing: ModelPairing, terms: SecondOrderTerms, rho: float
) -> CvaResult:
    rs = rho * terms.sigma
    cva1 = rs * terms.c1
    cva2 = rs * rs * terms.c2
    result = CvaResult(
        pairing=pairing.name,
        order="second",
        cva0=terms.cva0,
        cva1=cva1,
        cva2=cva2,
        total=terms.cva0 + cva1 + cva2,
        price=terms.price,
        survival=terms.survival,
    )
    _check_band(result, rho)
    return result


def cva_second_order(
    pairing: ModelPairing,
    state: MarketState,
    rho: float,
    quad: Optional[QuadratureConfig] = None,
    *,
    eta: float,
    price: Optional[PriceAndGreeks] = None,
    reduced_moments: bool = False,
    convention: Convention = "ito",
) -> CvaResult:
    """Second-order CVA for sabr-cir and heston-cir with nu = 0."""
    validate_correlations(CorrelationTriple(eta=eta, rho=rho, nu=0.0))
    terms = second_order_terms(
        pairing,
        state,
        eta,
        quad,
        price=price,
        reduced_moments=reduced_moments,
        convention=convention,
    )
    return assemble_second_order(pairing, terms, rho)
