import numpy as np
import pytest

from parajacobi import (
    build_bd_power,
    build_symmetric_bd,
    build_yafaev,
    decompose,
    estimate_limits,
    modulated_envelope_gamma,
    symmetric_bd_periodic,
)

N_MAX = 10**6


def pipeline(fam, n_max=N_MAX):
    dec = decompose(fam.periodic)
    lim = estimate_limits(fam, dec, n_max)
    return fam, dec, lim


@pytest.fixture(scope="session")
def bd15():
    return pipeline(build_bd_power(1.5))


@pytest.fixture(scope="session")
def bd125():
    return pipeline(build_bd_power(1.25))


@pytest.fixture(scope="session")
def yaf_2_05_0():
    return pipeline(build_yafaev(2.0, 0.5, 0.0))


@pytest.fixture(scope="session")
def yaf_125_1_0():
    return pipeline(build_yafaev(1.25, 1.0, 0.0))


@pytest.fixture(scope="session")
def symbd2():
    ta = (1.0, np.sqrt(2.0), np.sqrt(2.0), 1.0)
    periodic = symmetric_bd_periodic(ta)
    gamma = modulated_envelope_gamma(periodic, lambda n: np.sqrt(n + 1.0))
    return pipeline(build_symmetric_bd(ta, gamma))
