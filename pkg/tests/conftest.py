import math

import pytest
from src.drawdown_put.models import McConfig, ModelParams
from src.drawdown_put.verification import representative_states


@pytest.fixture
def params():
    """r = 0.1, sigma = 0.2, K = 100, e^c = 1.2."""
    return ModelParams.from_drawdown_ratio(r=0.1, sigma=0.2, strike_k=100.0, drawdown=1.2)


@pytest.fixture
def unit_params():
    """r = 0.5, sigma = 1 gives gamma = -1, C = 1: W = 2 sinh, Z = cosh."""
    return ModelParams(r=0.5, sigma=1.0, strike_k=100.0, c=math.log(2.0))


@pytest.fixture
def states(params):
    return representative_states(params)


@pytest.fixture
def fast_mc():
    return McConfig(n_paths=4_000, dt=1e-3, t_max=100.0, base_seed=20240101)
