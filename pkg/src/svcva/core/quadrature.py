from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.integrate import trapezoid as _sp_trapezoid

from svcva.core.errors import DomainError, QuadratureError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureConfig:
    """Fourier truncation/nodes and the time step used for every time integral."""

    upper_limit: float = 200.0
    n_nodes: int = 64
    dt: float = 1e-2
    tol: float = 1e-9
    max_panels: int = 256

    def __post_init__(self) -> None:
        if not self.upper_limit > 0.0:
            raise DomainError(f"upper_limit must be > 0, got {self.upper_limit}")
        if self.n_nodes < 16:
            raise DomainError(f"n_nodes must be >= 16, got {self.n_nodes}")
        if not self.dt > 0.0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if self.max_panels < 1:
            raise DomainError(f"max_panels must be >= 1, got {self.max_panels}")


def trapezoid(values: np.ndarray, dt: float) -> float:
    """Composite trapezoid of samples on a uniform grid of step ``dt``."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise DomainError("trapezoid needs at least two samples")
    return float(_sp_trapezoid(v, dx=dt))


def time_grid(t: float, s: float, dt: float) -> np.ndarray:
    """Uniform grid on [t, s] whose step is the largest one not exceeding ``dt``."""
    if s < t:
        raise DomainError(f"need t <= s, got t={t}, s={s}")
    if s == t:
        return np.array([float(t)])
    n = max(1, int(math.ceil((s - t) / dt - 1e-9)))
    return np.linspace(t, s, n + 1)


def integrate(values: np.ndarray, grid: np.ndarray) -> float:
    """Trapezoid integral over ``grid``; uniform grids go through :func:`trapezoid`."""
    if len(grid) < 2:
        return 0.0
    steps = np.diff(grid)
    if np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        return trapezoid(values, float(steps[0]))
    return float(_sp_trapezoid(values, x=grid))


def cumulative(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Running trapezoid integral from grid[0], same length as ``grid``."""
    if len(grid) < 2:
        return np.zeros_like(np.asarray(grid, dtype=float))
    return cumulative_trapezoid(values, grid, initial=0.0)


def iterated(outer: np.ndarray, inner: np.ndarray, grid: np.ndarray) -> float:
    """int_t^T outer(s) * int_t^s inner(u) du ds on one grid."""
    return integrate(outer * cumulative(inner, grid), grid)


@lru_cache(maxsize=8)
def _legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(
    integrand: Callable[[np.ndarray], np.ndarray],
    upper_limit: float,
    n_nodes: int = 64,
    tol: float = 1e-9,
    max_panels: int = 256,
) -> np.ndarray:
    """
    Integrate ``integrand`` over [0, upper_limit] with equal Gauss-Legendre panels.

    ``integrand`` maps a 1-D array of nodes to an array whose last axis runs
    over the nodes, so several integrals share one set of evaluations. The
    panel count doubles until every component moves by less than ``tol``.
    """
    x, w = _legendre(n_nodes)

    def _estimate(panels: int) -> np.ndarray:
        edges = np.linspace(0.0, upper_limit, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return np.asarray(integrand(nodes)) @ weights

    panels = 1
    prev = _estimate(panels)
    gap = math.inf
    while panels < max_panels:
        panels *= 2
        cur = _estimate(panels)
        gap = float(np.max(np.abs(cur - prev)))
        if gap < tol:
            logger.debug("gauss_legendre converged with %d panels", panels)
            return cur
        prev = cur
    raise QuadratureError(
        f"Fourier integral did not settle below {tol:g} with {max_panels} panels "
        f"of {n_nodes} nodes (last change {gap:.3g})"
    )
