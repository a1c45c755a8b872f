import math
import pathlib
import sys

import numpy as np
import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from svcva.core.errors import DomainError, QuadratureError
from svcva.core.quadrature import (
    QuadratureConfig,
    cumulative,
    gauss_legendre,
    integrate,
    iterated,
    time_grid,
    trapezoid,
)


def test_time_grid_hits_both_ends():
    g = time_grid(0.0, 1.0, 0.01)
    assert len(g) == 101
    assert g[0] == 0.0 and g[-1] == 1.0


def test_time_grid_step_never_exceeds_dt():
    g = time_grid(0.0, 0.305, 0.1)
    assert len(g) == 5
    assert np.max(np.diff(g)) <= 0.1
    assert time_grid(0.3, 0.3, 0.1).tolist() == [0.3]
    with pytest.raises(DomainError):
        time_grid(1.0, 0.5, 0.1)


def test_trapezoid_and_integrate():
    g = np.linspace(0.0, math.pi, 2001)
    assert integrate(np.sin(g), g) == pytest.approx(2.0, abs=1e-6)
    assert trapezoid(np.ones(11), 0.1) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        trapezoid(np.ones(1), 0.1)


def test_cumulative_and_iterated_are_exact_on_linear_data():
    g = time_grid(0.0, 1.0, 0.01)
    np.testing.assert_allclose(cumulative(np.ones_like(g), g), g, atol=1e-14)
    # int_0^1 int_0^s du ds = 1/2
    assert iterated(np.ones_like(g), np.ones_like(g), g) == pytest.approx(0.5, abs=1e-12)


def test_gauss_legendre_vector_integrand():
    vals = gauss_legendre(lambda z: np.vstack([np.exp(-z), z * np.exp(-z)]), 50.0)
    np.testing.assert_allclose(vals, [1.0, 1.0], atol=1e-9)


def test_gauss_legendre_gives_up():
    with pytest.raises(QuadratureError):
        gauss_legendre(lambda z: np.sin(1000.0 * z) * z, 1000.0, n_nodes=16, max_panels=2)


def test_config_bounds():
    with pytest.raises(DomainError):
        QuadratureConfig(n_nodes=8)
    with pytest.raises(DomainError):
        QuadratureConfig(dt=0.0)


def test_integrate_on_uneven_grid():
    g = np.array([0.0, 0.1, 0.5, 1.0])
    assert integrate(2.0 * g, g) == pytest.approx(1.0)
    uniform = time_grid(0.0, 1.0, 0.25)
    assert integrate(3.0 * uniform**2, uniform) == pytest.approx(
        trapezoid(3.0 * uniform**2, 0.25)
    )
