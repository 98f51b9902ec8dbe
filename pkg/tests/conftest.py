import warnings

import pytest

from lambdasabr import coeffs as cf
from lambdasabr.lmvf import ConditioningWarning
from lambdasabr.transform import BarrierContract


@pytest.fixture(autouse=True)
def _quiet_conditioning():
    # the benchmark shape parameters intentionally sit in the flat-kernel
    # regime; the warning is expected noise in most tests
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditioningWarning)
        yield


@pytest.fixture
def exp_coeffs():
    """Full-model coefficients used by the cross-validation tables."""
    return cf.ModelCoefficients.exponential(
        beta=-0.1, gamma1=0.5, gamma2=0.3, kappa1=1.0, kappa2=0.2, r0=0.02)


@pytest.fixture
def market():
    return cf.MarketState(forward=60.0, sigma=0.5)


@pytest.fixture
def contract55():
    return BarrierContract(strike=55.0, barrier=80.0, maturity=0.25)
