import warnings

import numpy as np
import pytest

import pairscatter as ps
from pairscatter.engine import RegimeWarning


@pytest.fixture(autouse=True)
def _quiet_regime_warnings():
    # Most unit tests run far below the production scale separation on purpose.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        yield


@pytest.fixture
def small_plus_config():
    return ps.config_from_dimensionless(
        kd=150.0, theta0=0.7, variant="plus", z_over_d=0.2,
        n=4096, realizations=16, seed=11,
    )


@pytest.fixture
def small_minus_config():
    return ps.config_from_dimensionless(
        kd=150.0, theta0=0.7, variant="minus", z_tilde=1.3,
        n=4096, realizations=16, seed=11,
    )


@pytest.fixture
def unit_mask_grid():
    # k = 1, theta0 = 1 so xi0 = 1 and dx = xi0/4; window = 512 xi0.
    return ps.make_grid(1, 2048, 0.25, 1.0)


def make_ones_mask(grid):
    return ps.DiffuserMask(
        at_omega=ps.ComplexField(grid, np.ones(grid.shape, dtype=complex)),
        realization_seed=0,
    )
