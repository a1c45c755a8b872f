from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Literal, Optional, Tuple, Union

import numpy as np

from svcva.core.errors import (
    CorrelationDomainError,
    DomainError,
    FellerConditionWarning,
    PairingError,
)

logger = logging.getLogger(__name__)

IntensityKind = Literal["vasicek", "cir"]
StrikeConvention = Literal["level", "log"]


class VolModel(str, Enum):
    SABR = "sabr"
    HULL_WHITE = "hw"
    HESTON = "heston"


class IntensityModel(str, Enum):
    VASICEK = "vasicek"
    CIR = "cir"


# ---- Correlations -----------------------------------------------------------


@dataclass(frozen=True)
class CorrelationTriple:
    """Correlations of (B1, B2, B3): asset/vol ``eta``, asset/intensity ``rho``,
    vol/intensity ``nu``.

    B2 is the volatility driver B, B1 = eta*B + sqrt(1-eta^2)*Z and
    B3 = nu*B + alpha*Z + beta*U with B, Z, U independent.
    """

    eta: float
    rho: float
    nu: float = 0.0

    @property
    def alpha(self) -> float:
        return validate_correlations(self)[0]

    @property
    def beta(self) -> float:
        return validate_correlations(self)[1]

    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0, self.eta, self.rho],
                [self.eta, 1.0, self.nu],
                [self.rho, self.nu, 1.0],
            ]
        )


def validate_correlations(triple: CorrelationTriple) -> Tuple[float, float]:
    """Return ``(alpha, beta)`` of the B3 decomposition, or raise."""
    eta, rho, nu = float(triple.eta), float(triple.rho), float(triple.nu)
    for name, v in (("eta", eta), ("rho", rho), ("nu", nu)):
        if not math.isfinite(v):
            raise CorrelationDomainError(f"{name}={v} is not finite", f"{name}^2 < 1")
        if v * v >= 1.0:
            raise CorrelationDomainError(f"{name}={v}", f"{name}^2 < 1")

    lhs = nu * nu + rho * rho + eta * eta
    rhs = 1.0 + 2.0 * nu * eta * rho
    if not lhs < rhs:
        raise CorrelationDomainError(
            f"(eta={eta}, rho={rho}, nu={nu}) gives {lhs:.6g} >= {rhs:.6g}",
            "nu^2 + rho^2 + eta^2 < 1 + 2*nu*eta*rho",
        )

    one_m_eta2 = 1.0 - eta * eta
    alpha = (rho - eta * nu) / math.sqrt(one_m_eta2)
    beta = math.sqrt(max(rhs - lhs, 0.0) / one_m_eta2)
    return alpha, beta


# ---- Model parameters ------------------------------------------------------


@dataclass(frozen=True)
class SabrParams:
    gamma: float
    c: float

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise DomainError(f"SABR gamma must lie in (0,1), got {self.gamma}")
        if not self.c > 0.0:
            raise DomainError(f"SABR vol-of-vol c must be > 0, got {self.c}")


@dataclass(frozen=True)
class HullWhiteParams:
    """Constant drift ``b`` and vol-of-vol ``c`` of dY = bY ds + cY dB."""

    b: float
    c: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.b):
            raise DomainError(f"Hull-White drift b must be finite, got {self.b}")
        if not self.c > 0.0:
            raise DomainError(f"Hull-White vol-of-vol c must be > 0, got {self.c}")


@dataclass(frozen=True)
class HestonParams:
    k: float
    theta: float
    c: float

    def __post_init__(self) -> None:
        for name in ("k", "theta", "c"):
            v = getattr(self, name)
            if not v > 0.0:
                raise DomainError(f"Heston {name} must be > 0, got {v}")
        if not self.feller_ok:
            _warn_feller("Heston variance", self.c**2, 2.0 * self.k * self.theta)

    @property
    def feller_ok(self) -> bool:
        return self.c**2 < 2.0 * self.k * self.theta


@dataclass(frozen=True)
class IntensityParams:
    kind: IntensityKind
    lambda0: float
    q: float
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if self.kind not in ("vasicek", "cir"):
            raise DomainError(f"unknown intensity kind '{self.kind}'")
        for name in ("q", "mu", "sigma"):
            v = getattr(self, name)
            if not v > 0.0:
                raise DomainError(f"{self.kind} {name} must be > 0, got {v}")
        if not math.isfinite(self.lambda0):
            raise DomainError(f"lambda0 must be finite, got {self.lambda0}")
        if self.kind == "cir":
            if not self.lambda0 > 0.0:
                raise DomainError(f"CIR lambda0 must be > 0, got {self.lambda0}")
            if not self.feller_ok:
                _warn_feller(
                    "CIR intensity", self.sigma**2, 2.0 * self.q * self.mu
                )

    @property
    def feller_ok(self) -> bool:
        if self.kind != "cir":
            return True
        return self.sigma**2 < 2.0 * self.q * self.mu


def _warn_feller(what: str, lhs: float, rhs: float) -> None:
    msg = f"{what} violates the Feller condition: {lhs:.6g} >= {rhs:.6g}"
    logger.warning(msg)
    warnings.warn(msg, FellerConditionWarning, stacklevel=3)


VolParams = Union[SabrParams, HullWhiteParams, HestonParams]

_VOL_TYPES = {
    VolModel.SABR: SabrParams,
    VolModel.HULL_WHITE: HullWhiteParams,
    VolModel.HESTON: HestonParams,
}


@dataclass(frozen=True)
class ModelPairing:
    """A volatility model coupled with an intensity model."""

    vol_model: VolModel
    vol: VolParams
    intensity: IntensityParams

    def __post_init__(self) -> None:
        object.__setattr__(self, "vol_model", VolModel(self.vol_model))
        expected = _VOL_TYPES[self.vol_model]
        if not isinstance(self.vol, expected):
            raise PairingError(
                f"{self.vol_model.value} pairing needs {expected.__name__}, "
                f"got {type(self.vol).__name__}"
            )

    @property
    def intensity_model(self) -> IntensityModel:
        return IntensityModel(self.intensity.kind)

    @property
    def name(self) -> str:
        return f"{self.vol_model.value}-{self.intensity.kind}"


# ---- Market state ----------------------------------------------------------


@dataclass(frozen=True)
class MarketState:
    """Evaluation time, maturity, log-price, volatility factor and log-strike."""

    t: float
    T: float
    x: float
    y: float
    kappa: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.t < self.T:
            raise DomainError(f"need 0 <= t < T, got t={self.t}, T={self.T}")
        if not self.y > 0.0:
            raise DomainError(f"volatility factor y must be > 0, got {self.y}")
        if not (math.isfinite(self.x) and math.isfinite(self.kappa)):
            raise DomainError("log-price and log-strike must be finite")

    @property
    def tau(self) -> float:
        return self.T - self.t

    @classmethod
    def from_prices(
        cls,
        *,
        s0: float,
        strike: float,
        y: float,
        T: float,
        t: float = 0.0,
        strike_convention: StrikeConvention = "level",
    ) -> "MarketState":
        if not s0 > 0.0:
            raise DomainError(f"initial price must be > 0, got {s0}")
        if strike_convention == "level":
            if not strike > 0.0:
                raise DomainError(f"strike level must be > 0, got {strike}")
            kappa = math.log(strike)
        elif strike_convention == "log":
            kappa = float(strike)
        else:
            raise DomainError(f"unknown strike convention '{strike_convention}'")
        return cls(t=t, T=T, x=math.log(s0), y=y, kappa=kappa)


# ---- Bundles from parameter sets -------------------------------------------


@dataclass(frozen=True)
class ParameterBundle:
    set_id: str
    label: str
    kind: Literal["intensity", "sabr", "heston", "hw"]
    intensity: Optional[IntensityParams] = None
    vol: Optional[VolParams] = None
    eta: Optional[float] = None
    y: Optional[float] = None
    strike: Optional[float] = None
    source_path: Optional[str] = None

    @property
    def feller_ok(self) -> bool:
        if self.intensity is not None:
            return self.intensity.feller_ok
        if isinstance(self.vol, HestonParams):
            return self.vol.feller_ok
        return True
