import math
import pathlib
import sys

import numpy as np
import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from svcva.core.errors import (
    CorrelationDomainError,
    DomainError,
    FellerConditionWarning,
    PairingError,
)
from svcva.core.params import (
    CorrelationTriple,
    HestonParams,
    IntensityParams,
    MarketState,
    ModelPairing,
    SabrParams,
    validate_correlations,
)


def test_decomposition_without_eta_and_nu():
    alpha, beta = validate_correlations(CorrelationTriple(eta=0.0, rho=0.5, nu=0.0))
    assert alpha == pytest.approx(0.5)
    assert beta == pytest.approx(math.sqrt(0.75))


def test_decomposition_has_unit_norm():
    triple = CorrelationTriple(eta=-0.3, rho=0.4, nu=0.2)
    alpha, beta = validate_correlations(triple)
    assert triple.nu**2 + alpha**2 + beta**2 == pytest.approx(1.0, abs=1e-12)


def test_valid_triple_gives_positive_definite_matrix():
    triple = CorrelationTriple(eta=-0.34, rho=0.9, nu=0.0)
    validate_correlations(triple)
    assert np.all(np.linalg.eigvalsh(triple.matrix()) > 0.0)


@pytest.mark.parametrize(
    "eta,rho,nu",
    [
        (0.0, 1.0, 0.0),
        (-0.3, 0.97, 0.0),
        (0.9, 0.9, -0.9),
        (0.0, float("nan"), 0.0),
    ],
)
def test_inadmissible_triples_raise(eta, rho, nu):
    with pytest.raises(CorrelationDomainError) as ei:
        validate_correlations(CorrelationTriple(eta=eta, rho=rho, nu=nu))
    assert ei.value.inequality


def test_market_state_from_strike_level():
    st = MarketState.from_prices(s0=1.0, strike=1.15, y=0.5887, T=0.5)
    assert st.x == 0.0
    assert st.kappa == pytest.approx(math.log(1.15))
    assert st.tau == 0.5


def test_market_state_from_log_strike():
    st = MarketState.from_prices(s0=1.0, strike=1.15, y=0.2, T=1.0, strike_convention="log")
    assert st.kappa == 1.15


def test_market_state_rejects_bad_window():
    with pytest.raises(DomainError):
        MarketState(t=1.0, T=1.0, x=0.0, y=0.2, kappa=0.0)
    with pytest.raises(DomainError):
        MarketState(t=0.0, T=1.0, x=0.0, y=0.0, kappa=0.0)


def test_sabr_gamma_must_be_inside_unit_interval():
    with pytest.raises(DomainError):
        SabrParams(gamma=1.0, c=0.5)


def test_feller_violation_warns_but_builds():
    with pytest.warns(FellerConditionWarning):
        p = IntensityParams(kind="cir", lambda0=0.03, q=0.5, mu=0.05, sigma=0.5)
    assert p.feller_ok is False


def test_vasicek_allows_zero_start():
    p = IntensityParams(kind="vasicek", lambda0=0.0, q=0.3, mu=0.4, sigma=0.1)
    assert p.feller_ok


def test_pairing_checks_vol_type():
    lam = IntensityParams(kind="cir", lambda0=0.03, q=0.02, mu=0.161, sigma=0.08)
    with pytest.raises(PairingError):
        ModelPairing(vol_model="heston", vol=SabrParams(gamma=0.7, c=0.7), intensity=lam)
    pairing = ModelPairing(vol_model="sabr", vol=SabrParams(gamma=0.7, c=0.7), intensity=lam)
    assert pairing.name == "sabr-cir"


def test_heston_feller_flag():
    with pytest.warns(FellerConditionWarning):
        h = HestonParams(k=1.0, theta=0.04, c=0.39)
    assert not h.feller_ok
