import numpy as np
import pytest

from cdctl import (
    FrequencyGrid,
    actuator_lag,
    compose_design,
    gsvd,
    midranging_filters,
    synth_response_pair,
)

TWO_PI = 2.0 * np.pi

# Diamond-style loop constants used across the suite
A_RAD = TWO_PI * 700.0
TAU_D = 900e-6
F_S = 10000.0
LAM_TISO = TWO_PI * 176.0
LAM_SISO = TWO_PI * 50.0


@pytest.fixture(scope="session")
def pair_96():
    """Ill-conditioned 96/96/64 synthetic plant (the bundled reference)."""
    return synth_response_pair(96, 96, 64, 1000.0, seed=42)


@pytest.fixture(scope="session")
def fact_96(pair_96):
    return gsvd(pair_96)


@pytest.fixture(scope="session")
def pair_small():
    return synth_response_pair(24, 32, 16, 50.0, seed=3)


@pytest.fixture(scope="session")
def fact_small(pair_small):
    return gsvd(pair_small)


@pytest.fixture(scope="session")
def filters_ref():
    return midranging_filters(A_RAD, A_RAD, TAU_D, LAM_TISO, LAM_SISO)


@pytest.fixture(scope="session")
def design_small(fact_small, filters_ref):
    return compose_design(fact_small, filters_ref, mu=1.0)


@pytest.fixture(scope="session")
def design_96(fact_96, filters_ref):
    return compose_design(fact_96, filters_ref, mu=1.0)


@pytest.fixture(scope="session")
def grid_coarse():
    return FrequencyGrid.logspace(f_min_hz=0.05, f_max_hz=5000.0, count=200)


@pytest.fixture(scope="session")
def g_ref():
    return actuator_lag(A_RAD, TAU_D)
