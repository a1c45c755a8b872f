"""
Correlated Monte Carlo benchmark for the CVA of a vulnerable call.

Paths are simulated in batches; batch i draws from the i-th child of
``SeedSequence(seed)``, so results do not depend on the worker count. The
default-free payoff serves as control variate for the defaultable one.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np

from svcva.core.engine import price_and_greeks
from svcva.core.errors import DegenerateError, DomainError, NumericalError
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
from svcva.core.quadrature import QuadratureConfig

logger = logging.getLogger(__name__)

SqrtScheme = Literal["full_truncation", "reflection"]
ControlSource = Literal["auto", "pricer", "pilot"]

# log-price at which a SABR path counts as absorbed at zero (S = 1e-12)
ABSORB_LOG_LEVEL = math.log(1e-12)


@dataclass(frozen=True)
class McConfig:
    n_steps: int = 500
    n_paths: int = 100_000
    seed: int = 20240101
    batch_size: int = 10_000
    workers: int = 1
    vol_scheme: SqrtScheme = "full_truncation"
    intensity_scheme: SqrtScheme = "full_truncation"
    control: ControlSource = "auto"
    pilot_paths: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise DomainError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.n_paths < 1:
            raise DomainError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise DomainError(f"workers must be >= 1, got {self.workers}")
        if self.pilot_paths is not None and self.pilot_paths < 2:
            raise DomainError(f"pilot_paths must be >= 2, got {self.pilot_paths}")


@dataclass(frozen=True)
class PathBatch:
    x_T: np.ndarray
    int_lambda: np.ndarray
    negative_fraction: float = 0.0
    absorbed_fraction: float = 0.0


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    raw_mean: float
    raw_std_error: float
    cv_correlation: float
    beta: float
    control_mean: float
    n_paths: int
    n_steps: int
    seed: int
    negative_fraction: float = 0.0
    absorbed_fraction: float = 0.0

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_error": self.std_error,
            "raw_mean": self.raw_mean,
            "raw_std_error": self.raw_std_error,
            "cv_correlation": self.cv_correlation,
            "beta": self.beta,
            "control_mean": self.control_mean,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "negative_fraction": self.negative_fraction,
            "absorbed_fraction": self.absorbed_fraction,
        }


def correlated_increments(
    corr: CorrelationTriple, dt: float, rng: np.random.Generator, size: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Brownian increments (dB1 asset, dB2 volatility, dB3 intensity)."""
    alpha, beta = validate_correlations(corr)
    z = rng.standard_normal((3, size)) * math.sqrt(dt)
    db2 = z[0]
    db1 = corr.eta * z[0] + math.sqrt(1.0 - corr.eta**2) * z[1]
    db3 = corr.nu * z[0] + alpha * z[1] + beta * z[2]
    return db1, db2, db3


def _sqrt_floor(v: np.ndarray, scheme: SqrtScheme) -> np.ndarray:
    return np.abs(v) if scheme == "reflection" else np.maximum(v, 0.0)


def _simulate_batch(
    pairing: ModelPairing,
    state: MarketState,
    corr: CorrelationTriple,
    mc: McConfig,
    size: int,
    seed_seq: np.random.SeedSequence,
) -> PathBatch:
    rng = np.random.default_rng(seed_seq)
    dt = state.tau / mc.n_steps
    vol = pairing.vol
    lam_p: IntensityParams = pairing.intensity

    x = np.full(size, state.x)
    y = np.full(size, state.y)
    lam = np.full(size, lam_p.lambda0)
    int_lam = np.zeros(size)
    went_negative = np.zeros(size, dtype=bool)
    absorbed = np.zeros(size, dtype=bool)

    vasicek = lam_p.kind == "vasicek"
    decay = math.exp(-lam_p.q * dt)
    vas_sd = lam_p.sigma * math.sqrt(-math.expm1(-2.0 * lam_p.q * dt) / (2.0 * lam_p.q))
    sqrt_dt = math.sqrt(dt)

    def lam_used(v: np.ndarray) -> np.ndarray:
        return v if vasicek else _sqrt_floor(v, mc.intensity_scheme)

    prev = lam_used(lam)
    for _ in range(mc.n_steps):
        db1, db2, db3 = correlated_increments(corr, dt, rng, size)

        if isinstance(vol, SabrParams):
            # zero absorbs the CEV asset; absorbed paths stay at x = -inf
            loc = y * np.exp((vol.gamma - 1.0) * np.maximum(x, ABSORB_LOG_LEVEL))
            x_new = x - 0.5 * loc * loc * dt + loc * db1
            absorbed |= ~np.isfinite(x_new) | (x_new <= ABSORB_LOG_LEVEL)
            x_new = np.where(absorbed, -np.inf, x_new)
            y = y * np.exp(vol.c * db2 - 0.5 * vol.c**2 * dt)
        elif isinstance(vol, HullWhiteParams):
            x_new = x - 0.5 * y * y * dt + y * db1
            y = y * np.exp((vol.b - 0.5 * vol.c**2) * dt + vol.c * db2)
        elif isinstance(vol, HestonParams):
            yp = _sqrt_floor(y, mc.vol_scheme)
            x_new = x - 0.5 * yp * dt + np.sqrt(yp) * db1
            y = y + vol.k * (vol.theta - yp) * dt + vol.c * np.sqrt(yp) * db2
        else:
            raise DomainError(f"cannot simulate {type(vol).__name__}")
        x = x_new

        if vasicek:
            lam = lam_p.mu + (lam - lam_p.mu) * decay + vas_sd * (db3 / sqrt_dt)
            went_negative |= lam < 0.0
        else:
            lp = _sqrt_floor(lam, mc.intensity_scheme)
            lam = lam + lam_p.q * (lam_p.mu - lp) * dt + lam_p.sigma * np.sqrt(lp) * db3

        cur = lam_used(lam)
        int_lam += 0.5 * (prev + cur) * dt
        prev = cur

    return PathBatch(
        x_T=x,
        int_lambda=int_lam,
        negative_fraction=float(np.mean(went_negative)) if vasicek else 0.0,
        absorbed_fraction=float(np.mean(absorbed)),
    )


def simulate_paths(
    pairing: ModelPairing,
    state: MarketState,
    corr: CorrelationTriple,
    mc: Optional[McConfig] = None,
    on_batch: Optional[Callable[[int], None]] = None,
) -> PathBatch:
    """Terminal log-prices and integrated intensities for ``mc.n_paths`` paths."""
    mc = mc or McConfig()
    validate_correlations(corr)
    n_batches = -(-mc.n_paths // mc.batch_size)
    sizes = [mc.batch_size] * (n_batches - 1)
    sizes.append(mc.n_paths - mc.batch_size * (n_batches - 1))
    children = np.random.SeedSequence(mc.seed).spawn(n_batches)

    def run(i: int) -> PathBatch:
        out = _simulate_batch(pairing, state, corr, mc, sizes[i], children[i])
        if on_batch is not None:
            on_batch(sizes[i])
        return out

    if mc.workers > 1 and n_batches > 1:
        with ThreadPoolExecutor(max_workers=mc.workers) as pool:
            batches: List[PathBatch] = list(pool.map(run, range(n_batches)))
    else:
        batches = [run(i) for i in range(n_batches)]

    neg = float(
        sum(b.negative_fraction * s for b, s in zip(batches, sizes)) / mc.n_paths
    )
    if neg > 0.0:
        logger.info(
            "%.2f%% of Vasicek intensity paths went negative", 100.0 * neg
        )
    absorbed = float(
        sum(b.absorbed_fraction * s for b, s in zip(batches, sizes)) / mc.n_paths
    )
    if absorbed > 0.0:
        logger.info("%.2f%% of asset paths were absorbed at zero", 100.0 * absorbed)
    return PathBatch(
        x_T=np.concatenate([b.x_T for b in batches]),
        int_lambda=np.concatenate([b.int_lambda for b in batches]),
        negative_fraction=neg,
        absorbed_fraction=absorbed,
    )


def _call_payoff(x_T: np.ndarray, kappa: float) -> np.ndarray:
    return np.maximum(np.exp(x_T) - math.exp(kappa), 0.0)


def mc_cva(
    paths: PathBatch,
    state: MarketState,
    control_mean: float,
    mc: Optional[McConfig] = None,
    control_std_error: float = 0.0,
) -> McEstimate:
    """
    Control-variate estimate of E[(1 - e^{-int lambda}) (S_T - K)^+].

    ``control_std_error`` is the sampling error of ``control_mean`` when it
    comes from a pilot run; it enters the reported error through beta.
    """
    mc = mc or McConfig()
    control = _call_payoff(paths.x_T, state.kappa)
    target = -np.expm1(-paths.int_lambda) * control
    n = target.size
    if n < 2:
        raise DegenerateError("need at least two paths for a standard error")
    bad = int(np.count_nonzero(~(np.isfinite(target) & np.isfinite(control))))
    if bad:
        raise NumericalError(f"{bad} of {n} simulated paths gave a non-finite payoff")
    if not math.isfinite(control_mean):
        raise NumericalError(f"control mean is not finite ({control_mean})")

    var_c = float(np.var(control, ddof=1))
    if var_c == 0.0:
        raise DegenerateError("control variate has zero variance; the call never pays")
    cov = float(np.cov(target, control, ddof=1)[0, 1])
    beta = cov / var_c
    adjusted = target - beta * (control - control_mean)

    var_t = float(np.var(target, ddof=1))
    corr_pc = cov / math.sqrt(var_t * var_c) if var_t > 0.0 else 0.0
    std_err = math.sqrt(
        float(np.var(adjusted, ddof=1)) / n + (beta * control_std_error) ** 2
    )
    return McEstimate(
        mean=float(np.mean(adjusted)),
        std_error=std_err,
        raw_mean=float(np.mean(target)),
        raw_std_error=math.sqrt(var_t / n),
        cv_correlation=corr_pc,
        beta=beta,
        control_mean=float(control_mean),
        n_paths=n,
        n_steps=mc.n_steps,
        seed=mc.seed,
        negative_fraction=paths.negative_fraction,
        absorbed_fraction=paths.absorbed_fraction,
    )


def _pilot_control(
    pairing: ModelPairing, state: MarketState, corr: CorrelationTriple, mc: McConfig
) -> Tuple[float, float]:
    pilot = replace(mc, n_paths=mc.pilot_paths or mc.n_paths, seed=mc.seed + 1)
    paths = simulate_paths(pairing, state, corr, pilot)
    payoff = _call_payoff(paths.x_T, state.kappa)
    return float(np.mean(payoff)), float(np.std(payoff, ddof=1) / math.sqrt(payoff.size))


def run_monte_carlo(
    pairing: ModelPairing,
    state: MarketState,
    corr: CorrelationTriple,
    mc: Optional[McConfig] = None,
    quad: Optional[QuadratureConfig] = None,
    on_batch: Optional[Callable[[int], None]] = None,
) -> McEstimate:
    """Simulate and estimate, taking the control mean from the pricer or a pilot run.

    ``control="auto"`` uses the pricer for SABR and Heston and a pilot run
    (seed + 1) for Hull-White, whose price is itself an approximation.
    """
    mc = mc or McConfig()
    source = mc.control
    if source == "auto":
        source = "pilot" if isinstance(pairing.vol, HullWhiteParams) else "pricer"

    control_se = 0.0
    if source == "pricer":
        control_mean = price_and_greeks(pairing, state, corr.eta, quad).u
    else:
        control_mean, control_se = _pilot_control(pairing, state, corr, mc)

    paths = simulate_paths(pairing, state, corr, mc, on_batch=on_batch)
    est = mc_cva(paths, state, control_mean, mc, control_std_error=control_se)
    logger.debug(
        "%s rho=%.3g: MC CVA %.6g +- %.2g (raw +- %.2g, corr %.3f)",
        pairing.name,
        corr.rho,
        est.mean,
        est.std_error,
        est.raw_std_error,
        est.cv_correlation,
    )
    return est
