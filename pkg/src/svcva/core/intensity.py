"""
Affine survival factors for Vasicek and CIR default intensities.

N^t_s = E_s[exp(-int_t^T lambda)] = exp(-int_t^s lambda) * exp(phi(T-s) lambda_s + psi(T-s)),
a martingale in s with dN = N phi(T-s) dM^lambda, phi <= 0.

The profile helpers evaluate the auxiliary expectations E[N_s sqrt(lambda_s)],
E[N_s lambda_s] and E[N_s Y_s] on a whole time grid starting at t; the
scalar wrappers return the value at s.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
from scipy.integrate import solve_ivp

from svcva.core.errors import DomainError
from svcva.core.params import HullWhiteParams, IntensityParams
from svcva.core.quadrature import cumulative, time_grid

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]
Convention = Literal["ito", "flipped"]


@dataclass(frozen=True)
class AffineFactors:
    phi: ArrayLike
    psi: ArrayLike


def _as_tau(tau: ArrayLike) -> np.ndarray:
    arr = np.asarray(tau, dtype=float)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise DomainError(f"time to maturity must be finite and >= 0, got {tau}")
    return arr


def _scalar_or_array(a: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(a) if np.ndim(like) == 0 else a


def affine_factors(params: IntensityParams, tau: ArrayLike) -> AffineFactors:
    tau_a = _as_tau(tau)
    q, mu, s2 = params.q, params.mu, params.sigma**2
    if params.kind == "vasicek":
        phi = np.expm1(-q * tau_a) / q
        psi = -(mu - s2 / (2.0 * q * q)) * (phi + tau_a) - s2 * phi * phi / (4.0 * q)
    else:
        p = math.sqrt(q * q + 2.0 * s2)
        decay = np.exp(-p * tau_a)
        tail = (p + q) + (p - q) * decay
        phi = -2.0 * (1.0 - decay) / tail
        psi = (2.0 * q * mu / s2) * (
            math.log(2.0 * p) - 0.5 * (p - q) * tau_a - np.log(tail)
        )
    return AffineFactors(_scalar_or_array(phi, tau), _scalar_or_array(psi, tau))


def riccati_factors(params: IntensityParams, tau: ArrayLike) -> AffineFactors:
    """(phi, psi) by integrating the Riccati system in the time to maturity."""
    tau_a = _as_tau(tau)
    flat = np.atleast_1d(tau_a).ravel()
    q, mu, s2 = params.q, params.mu, params.sigma**2

    if params.kind == "cir":

        def rhs(_: float, z: np.ndarray) -> list[float]:
            phi = z[0]
            return [0.5 * s2 * phi * phi - q * phi - 1.0, q * mu * phi]

    else:

        def rhs(_: float, z: np.ndarray) -> list[float]:
            phi = z[0]
            return [-q * phi - 1.0, q * mu * phi + 0.5 * s2 * phi * phi]

    order = np.argsort(flat)
    out = np.zeros((2, flat.size))
    horizon = float(flat.max()) if flat.size else 0.0
    if horizon > 0.0:
        sol = solve_ivp(
            rhs,
            (0.0, horizon),
            [0.0, 0.0],
            method="DOP853",
            t_eval=flat[order],
            rtol=1e-12,
            atol=1e-14,
        )
        out[:, order] = sol.y
    phi = out[0].reshape(np.shape(tau_a))
    psi = out[1].reshape(np.shape(tau_a))
    return AffineFactors(_scalar_or_array(phi, tau), _scalar_or_array(psi, tau))


def check_affine_factors(
    params: IntensityParams, taus: ArrayLike | None = None, tol: float = 1e-6
) -> float:
    """Largest |closed form - Riccati| over ``taus``; logged when above ``tol``."""
    grid = np.linspace(0.0, 2.0, 41) if taus is None else np.atleast_1d(taus)
    closed = affine_factors(params, grid)
    oracle = riccati_factors(params, grid)
    gap = float(
        max(
            np.max(np.abs(np.asarray(closed.phi) - np.asarray(oracle.phi))),
            np.max(np.abs(np.asarray(closed.psi) - np.asarray(oracle.psi))),
        )
    )
    if gap > tol:
        logger.warning(
            "%s affine factors disagree with the Riccati solution by %.3g",
            params.kind,
            gap,
        )
    return gap


def survival_factor(params: IntensityParams, lam: float, tau: ArrayLike) -> ArrayLike:
    f = affine_factors(params, tau)
    val = np.exp(np.asarray(f.phi) * lam + np.asarray(f.psi))
    return _scalar_or_array(val, tau)


# ---- auxiliary expectations (CIR) ------------------------------------------


def _check_window(t: float, s: float, T: float) -> None:
    if not (0.0 <= t <= s <= T):
        raise DomainError(f"need 0 <= t <= s <= T, got t={t}, s={s}, T={T}")


def _require_cir(params: IntensityParams) -> float:
    if params.kind != "cir":
        raise DomainError("this expectation is defined for a CIR intensity")
    lam = params.lambda0
    if not lam > 0.0:
        raise DomainError(f"needs lambda > 0, got {lam}")
    return lam


def expect_N_sqrtlam_profile(
    params: IntensityParams,
    grid: np.ndarray,
    T: float,
    convention: Convention = "ito",
) -> np.ndarray:
    """
    E[N^t_s sqrt(lambda_s)] for s on ``grid`` (grid[0] = t), with 1/sqrt(lambda_u)
    frozen at 1/sqrt(lambda_t).

    The decay rate is alpha(u) = (q - sigma^2 phi(T-u))/2; ``"flipped"``
    switches to (q + sigma^2 phi(T-u))/4.
    """
    lam = _require_cir(params)
    t = float(grid[0])
    q, mu, s2 = params.q, params.mu, params.sigma**2
    n_tt = float(survival_factor(params, lam, T - t))
    phi = np.asarray(affine_factors(params, T - grid).phi)
    if convention == "ito":
        alpha = 0.5 * (q - s2 * phi)
    else:
        alpha = 0.25 * (q + s2 * phi)
    a_cum = cumulative(alpha, grid)
    decay = np.exp(-a_cum)
    source = (4.0 * q * mu - s2) / (8.0 * math.sqrt(lam))
    return n_tt * decay * (math.sqrt(lam) + source * cumulative(np.exp(a_cum), grid))


def expect_N_sqrtlam(
    params: IntensityParams,
    t: float,
    s: float,
    T: float,
    dt: float = 1e-2,
    convention: Convention = "ito",
) -> float:
    _check_window(t, s, T)
    return float(expect_N_sqrtlam_profile(params, time_grid(t, s, dt), T, convention)[-1])


def expect_N_lam_profile(
    params: IntensityParams,
    grid: np.ndarray,
    T: float,
    convention: Convention = "ito",
) -> np.ndarray:
    """E[N^t_s lambda_s] on ``grid``; exact first moment of the survival-weighted CIR."""
    lam = _require_cir(params)
    t = float(grid[0])
    q, mu, s2 = params.q, params.mu, params.sigma**2
    n_tt = float(survival_factor(params, lam, T - t))
    phi = np.asarray(affine_factors(params, T - grid).phi)
    rate = q - s2 * phi if convention == "ito" else q + s2 * phi
    b_cum = cumulative(rate, grid)
    return n_tt * np.exp(-b_cum) * (lam + q * mu * cumulative(np.exp(b_cum), grid))


def expect_N_lam(
    params: IntensityParams,
    t: float,
    s: float,
    T: float,
    dt: float = 1e-2,
    convention: Convention = "ito",
) -> float:
    _check_window(t, s, T)
    return float(expect_N_lam_profile(params, time_grid(t, s, dt), T, convention)[-1])


# ---- E[N Y] under a Vasicek intensity --------------------------------------


def _require_vasicek(params: IntensityParams) -> None:
    if params.kind != "vasicek":
        raise DomainError("this expectation is defined for a Vasicek intensity")


def vasicek_phi_integral(params: IntensityParams, t: float, s: ArrayLike, T: float) -> ArrayLike:
    """int_t^s phi(T-u) du in closed form."""
    q = params.q
    s_a = np.asarray(s, dtype=float)
    val = -(s_a - t) / q + (np.exp(-q * (T - s_a)) - math.exp(-q * (T - t))) / (q * q)
    return _scalar_or_array(val, s)


def expect_NY_sabr_vasicek(
    vparams: IntensityParams,
    c: float,
    y: float,
    nu: float,
    t: float,
    s: ArrayLike,
    T: float,
) -> ArrayLike:
    """E[N^t_s Y_s] for a driftless lognormal Y (SABR volatility) and a Vasicek
    intensity; the exponent is Gaussian, so the value is y*exp(f1 + f2^2/2)."""
    _require_vasicek(vparams)
    s_a = np.asarray(s, dtype=float)
    if np.any(s_a < t) or np.any(s_a > T):
        raise DomainError(f"need t <= s <= T, got t={t}, s={s}, T={T}")
    q, mu, sig = vparams.q, vparams.mu, vparams.sigma
    lam = vparams.lambda0
    s2 = sig * sig
    tau_t, tau_s = T - t, T - s_a
    e_t, e_s = math.exp(-q * tau_t), np.exp(-q * tau_s)
    phi_t = math.expm1(-q * tau_t) / q
    h = s_a - t

    f1 = (
        -mu * tau_t
        - 0.5 * c * c * h
        + s2 * tau_s / (2.0 * q * q)
        + (lam - mu) * phi_t
        - s2 * (3.0 + e_s * e_s - 4.0 * e_s) / (4.0 * q**3)
    )
    f2sq = (
        (s2 / q**2 - 2.0 * c * nu * sig / q) * h
        - 2.0 * (s2 / q**2 - c * nu * sig / q) * (e_s - e_t) / q
        + s2 * (e_s * e_s - e_t * e_t) / (2.0 * q**3)
        + c * c * h
    )
    return _scalar_or_array(y * np.exp(f1 + 0.5 * f2sq), s)


def expect_NY_hw_vasicek(
    vparams: IntensityParams,
    hw: HullWhiteParams,
    y: float,
    nu: float,
    t: float,
    s: ArrayLike,
    T: float,
) -> ArrayLike:
    """E[N^t_s Y_s] for dY = bY ds + cY dB and a Vasicek intensity.

    Equals y * N^t_t * exp(int_t^s [b + nu*sigma*c*phi(T-u)] du); the N^t_t
    factor is written in its expanded bracket form.
    """
    _require_vasicek(vparams)
    s_a = np.asarray(s, dtype=float)
    if np.any(s_a < t) or np.any(s_a > T):
        raise DomainError(f"need t <= s <= T, got t={t}, s={s}, T={T}")
    q, mu, sig = vparams.q, vparams.mu, vparams.sigma
    lam = vparams.lambda0
    tau_t = T - t
    phi_t = math.expm1(-q * tau_t) / q
    log_n_tt = (sig * sig / (2.0 * q * q) - mu) * tau_t + (
        lam - mu + (sig * sig / (4.0 * q * q)) * (3.0 - math.exp(-q * tau_t))
    ) * phi_t
    drift = hw.b * (s_a - t) + nu * sig * hw.c * np.asarray(
        vasicek_phi_integral(vparams, t, s_a, T)
    )
    return _scalar_or_array(y * np.exp(log_n_tt + drift), s)
