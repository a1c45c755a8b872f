import math
import pathlib
import sys
import warnings
from dataclasses import replace

import numpy as np
import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from svcva.core.engine import cva_first_order, cva_second_order, first_order_terms
from svcva.core.errors import DegenerateError, DomainError, NumericalError
from svcva.core.montecarlo import (
    McConfig,
    PathBatch,
    correlated_increments,
    mc_cva,
    run_monte_carlo,
    simulate_paths,
)
from svcva.core.params import (
    CorrelationTriple,
    HestonParams,
    HullWhiteParams,
    IntensityParams,
    MarketState,
    ModelPairing,
    SabrParams,
)

SABR = SabrParams(gamma=0.7367, c=0.7356)
CIR_1 = IntensityParams(kind="cir", lambda0=0.03, q=0.02, mu=0.161, sigma=0.08)
CIR_2 = IntensityParams(kind="cir", lambda0=0.05, q=0.09, mu=0.2, sigma=0.1)
VAS_1 = IntensityParams(kind="vasicek", lambda0=0.09, q=0.3, mu=0.4, sigma=0.1)

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    HESTON = HestonParams(k=1.0, theta=0.04, c=0.39)

SMALL = McConfig(n_steps=50, n_paths=4_000, batch_size=1_000, seed=7)


def _state(y, strike=1.15, T=0.5):
    return MarketState.from_prices(s0=1.0, strike=strike, y=y, T=T)


def test_increments_have_requested_correlations():
    corr = CorrelationTriple(eta=-0.34, rho=0.5, nu=0.2)
    rng = np.random.default_rng(1)
    db1, db2, db3 = correlated_increments(corr, 1.0, rng, 200_000)
    got = np.corrcoef(np.vstack([db1, db2, db3]))
    np.testing.assert_allclose(got, corr.matrix(), atol=0.01)
    assert np.var(db1) == pytest.approx(1.0, rel=0.02)


def test_increments_scale_with_dt():
    rng = np.random.default_rng(2)
    db1, _, _ = correlated_increments(CorrelationTriple(eta=0.0, rho=0.0), 0.01, rng, 100_000)
    assert np.std(db1) == pytest.approx(0.1, rel=0.02)


def test_paths_do_not_depend_on_worker_count():
    pairing = ModelPairing("sabr", SABR, CIR_2)
    corr = CorrelationTriple(eta=-0.3, rho=0.5)
    one = simulate_paths(pairing, _state(0.5887), corr, SMALL)
    many = simulate_paths(
        pairing, _state(0.5887), corr, replace(SMALL, workers=3)
    )
    np.testing.assert_array_equal(one.x_T, many.x_T)
    np.testing.assert_array_equal(one.int_lambda, many.int_lambda)
    assert one.x_T.size == SMALL.n_paths


def test_uneven_last_batch():
    pairing = ModelPairing("sabr", SABR, CIR_2)
    mc = McConfig(n_steps=10, n_paths=2_500, batch_size=1_000, seed=3)
    paths = simulate_paths(pairing, _state(0.5887), CorrelationTriple(eta=-0.3, rho=0.0), mc)
    assert paths.x_T.size == 2_500


def test_other_seed_other_paths():
    pairing = ModelPairing("sabr", SABR, CIR_2)
    corr = CorrelationTriple(eta=-0.3, rho=0.0)
    a = simulate_paths(pairing, _state(0.5887), corr, SMALL)
    b = simulate_paths(pairing, _state(0.5887), corr, replace(SMALL, seed=8))
    assert not np.array_equal(a.x_T, b.x_T)


def test_zero_intensity_gives_zero_cva():
    rng = np.random.default_rng(0)
    paths = PathBatch(x_T=rng.normal(0.0, 0.3, 1_000), int_lambda=np.zeros(1_000))
    est = mc_cva(paths, _state(0.2, strike=1.0), control_mean=0.1)
    assert est.mean == 0.0
    assert est.std_error == 0.0


def test_control_without_variance_is_degenerate():
    paths = PathBatch(x_T=np.full(100, -5.0), int_lambda=np.full(100, 0.05))
    with pytest.raises(DegenerateError):
        mc_cva(paths, _state(0.2, strike=1.0), control_mean=0.0)


@pytest.mark.parametrize(
    "pairing,state,eta",
    [
        (ModelPairing("sabr", SABR, VAS_1), _state(0.5887), -0.3),
        (ModelPairing("heston", HESTON, CIR_2), _state(0.034), -0.34),
    ],
)
def test_uncorrelated_benchmark_matches_zero_order(pairing, state, eta):
    mc = McConfig(n_steps=100, n_paths=20_000, batch_size=5_000, seed=11)
    est = run_monte_carlo(pairing, state, CorrelationTriple(eta=eta, rho=0.0), mc)
    cva0 = first_order_terms(pairing, state, eta).cva0
    assert abs(est.mean - cva0) < 4.0 * est.std_error + 0.05 * cva0
    assert est.std_error < est.raw_std_error
    assert est.cv_correlation > 0.8


def test_hull_white_uses_pilot_control():
    pairing = ModelPairing("hw", HullWhiteParams(b=0.0, c=0.3), CIR_2)
    state = _state(0.2, strike=1.0)
    mc = McConfig(n_steps=50, n_paths=5_000, batch_size=5_000, seed=5, pilot_paths=5_000)
    est = run_monte_carlo(pairing, state, CorrelationTriple(eta=-0.3, rho=0.25), mc)
    pilot = simulate_paths(
        pairing, state, CorrelationTriple(eta=-0.3, rho=0.25), replace(mc, seed=6)
    )
    payoff = np.maximum(np.exp(pilot.x_T) - 1.0, 0.0)
    assert est.control_mean == pytest.approx(float(np.mean(payoff)))
    assert est.std_error > 0.0 and math.isfinite(est.mean)


def test_negative_vasicek_paths_are_counted():
    lam = IntensityParams(kind="vasicek", lambda0=0.0, q=1.0, mu=0.01, sigma=0.5)
    pairing = ModelPairing("sabr", SABR, lam)
    paths = simulate_paths(pairing, _state(0.5887), CorrelationTriple(eta=-0.3, rho=0.0), SMALL)
    assert 0.0 < paths.negative_fraction < 1.0


def test_config_rejects_empty_runs():
    with pytest.raises(DomainError):
        McConfig(n_paths=0)
    with pytest.raises(DomainError):
        McConfig(pilot_paths=1)


@pytest.mark.parametrize("intensity", [VAS_1, CIR_1])
@pytest.mark.parametrize("T", [0.5, 1.0])
def test_sabr_benchmark_is_finite_at_default_size(intensity, T):
    pairing = ModelPairing("sabr", SABR, intensity)
    state = _state(0.5887, T=T)
    est = run_monte_carlo(pairing, state, CorrelationTriple(eta=-0.3, rho=0.0), McConfig())
    assert math.isfinite(est.mean) and math.isfinite(est.std_error)
    cva0 = first_order_terms(pairing, state, -0.3).cva0
    assert abs(est.mean - cva0) < max(3.0 * est.std_error, 0.1 * cva0)


def test_sabr_paths_absorbed_at_zero_pay_nothing():
    # gamma well below one with a large vol-of-vol drives some paths to zero
    pairing = ModelPairing("sabr", SabrParams(gamma=0.3, c=1.5), CIR_2)
    mc = McConfig(n_steps=200, n_paths=5_000, batch_size=5_000, seed=2)
    paths = simulate_paths(pairing, _state(1.5, T=2.0), CorrelationTriple(eta=-0.3, rho=0.0), mc)
    assert paths.absorbed_fraction > 0.0
    assert not np.any(np.isnan(paths.x_T))
    dead = np.isneginf(paths.x_T)
    assert dead.mean() == pytest.approx(paths.absorbed_fraction)
    est = mc_cva(paths, _state(1.5, T=2.0), control_mean=0.3)
    assert math.isfinite(est.mean)


def test_non_finite_payoffs_are_reported():
    x_T = np.linspace(-0.5, 0.5, 100)
    x_T[[3, 40]] = np.nan
    paths = PathBatch(x_T=x_T, int_lambda=np.full(100, 0.05))
    with pytest.raises(NumericalError, match="2 of 100"):
        mc_cva(paths, _state(0.2, strike=1.0), control_mean=0.1)


def test_quadrupling_paths_halves_the_error():
    pairing = ModelPairing("heston", HESTON, CIR_2)
    corr = CorrelationTriple(eta=-0.34, rho=0.25)
    small = McConfig(n_steps=50, n_paths=10_000, batch_size=5_000, seed=13)
    big = replace(small, n_paths=40_000)
    a = run_monte_carlo(pairing, _state(0.034), corr, small)
    b = run_monte_carlo(pairing, _state(0.034), corr, big)
    assert a.std_error / b.std_error == pytest.approx(2.0, rel=0.2)


def test_control_variate_on_heston_cir():
    pairing = ModelPairing("heston", HESTON, CIR_1)
    mc = McConfig(n_steps=100, n_paths=20_000, batch_size=5_000, seed=17)
    est = run_monte_carlo(pairing, _state(0.034), CorrelationTriple(eta=-0.34, rho=0.0), mc)
    assert est.cv_correlation >= 0.95
    assert 3.0 * est.std_error <= est.raw_std_error


def _within_benchmark(formula, est):
    return abs(formula - est.mean) <= max(3.0 * est.std_error, 0.1 * abs(est.mean))


@pytest.mark.parametrize(
    "pairing,state,eta",
    [
        (ModelPairing("sabr", SABR, VAS_1), _state(0.5887), -0.3),
        (ModelPairing("heston", HESTON, VAS_1), _state(0.034), -0.34),
        (ModelPairing("sabr", SABR, CIR_2), _state(0.5887), -0.3),
        (ModelPairing("heston", HESTON, CIR_1), _state(0.034), -0.34),
    ],
)
@pytest.mark.parametrize("rho", [-0.5, 0.5])
def test_first_order_against_correlated_benchmark(pairing, state, eta, rho):
    mc = McConfig(n_steps=100, n_paths=50_000, batch_size=10_000, seed=21)
    corr = CorrelationTriple(eta=eta, rho=rho)
    est = run_monte_carlo(pairing, state, corr, mc)
    assert _within_benchmark(cva_first_order(pairing, state, corr).total, est)


@pytest.mark.parametrize(
    "pairing,state,eta",
    [
        (ModelPairing("sabr", SABR, CIR_2), _state(0.5887), -0.3),
        (ModelPairing("heston", HESTON, CIR_1), _state(0.034), -0.34),
    ],
)
@pytest.mark.parametrize("rho", [-0.5, 0.5])
def test_second_order_against_correlated_benchmark(pairing, state, eta, rho):
    mc = McConfig(n_steps=100, n_paths=50_000, batch_size=10_000, seed=23)
    est = run_monte_carlo(pairing, state, CorrelationTriple(eta=eta, rho=rho), mc)
    assert _within_benchmark(cva_second_order(pairing, state, rho, eta=eta).total, est)


@pytest.mark.filterwarnings("ignore::svcva.core.errors.FellerConditionWarning")
def test_second_order_helps_at_strong_correlation():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cir_3 = IntensityParams(kind="cir", lambda0=0.01, q=0.8, mu=0.02, sigma=0.2)
    heston = ModelPairing("heston", HESTON, cir_3)
    cells = [(T, rho) for T in (0.5, 1.0) for rho in (-0.75, 0.75)]
    mc = McConfig(n_steps=200, n_paths=100_000, batch_size=10_000, seed=29)
    better = 0
    for T, rho in cells:
        state = _state(0.034, T=T)
        corr = CorrelationTriple(eta=-0.34, rho=rho)
        est = run_monte_carlo(heston, state, corr, mc)
        first = cva_first_order(heston, state, corr).total
        second = cva_second_order(heston, state, rho, eta=-0.34).total
        better += abs(second - est.mean) <= abs(first - est.mean)
    assert better >= 3


@pytest.mark.filterwarnings("ignore::svcva.core.errors.FellerConditionWarning")
def test_benchmark_runs_far_from_feller():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cir_4 = IntensityParams(kind="cir", lambda0=0.03, q=0.5, mu=0.05, sigma=0.5)
    mc = McConfig(n_steps=100, n_paths=10_000, batch_size=5_000, seed=31)
    for pairing, state, eta in [
        (ModelPairing("sabr", SABR, cir_4), _state(0.5887), -0.3),
        (ModelPairing("heston", HESTON, cir_4), _state(0.034), -0.34),
    ]:
        for rho in (-0.75, 0.75):
            est = run_monte_carlo(pairing, state, CorrelationTriple(eta=eta, rho=rho), mc)
            assert math.isfinite(est.mean) and est.std_error > 0.0
            assert math.isfinite(cva_second_order(pairing, state, rho, eta=eta).total)


@pytest.mark.parametrize(
    "pairing,state,eta",
    [
        (ModelPairing("heston", HESTON, CIR_1), _state(0.034), -0.34),
        (ModelPairing("hw", HullWhiteParams(b=0.0, c=0.3), CIR_1), _state(0.2, strike=1.0), -0.3),
    ],
)
def test_benchmark_is_finite_at_default_size(pairing, state, eta):
    est = run_monte_carlo(pairing, state, CorrelationTriple(eta=eta, rho=0.25), McConfig())
    assert math.isfinite(est.mean) and est.std_error > 0.0
