import math

import numpy as np
import pytest
from src.drawdown_put.policy import (
    DrawdownBarrierPolicy,
    FixedBarrierPolicy,
    StoppingPolicy,
    optimal_policy,
)
from src.drawdown_put.pricing import optimal_barrier


class TestFixedBarrierPolicy:
    def test_scalar(self, params):
        assert float(FixedBarrierPolicy(4.2).barrier(params, 4.6)) == 4.2

    def test_array(self, params):
        levels = FixedBarrierPolicy(4.2).barrier(params, np.array([4.5, 4.7, 4.9]))
        np.testing.assert_array_equal(levels, [4.2, 4.2, 4.2])

    def test_never_exercise(self, params):
        assert FixedBarrierPolicy(-math.inf).barrier(params, np.array([1.0]))[0] == -math.inf

    def test_describe(self):
        assert "4.2" in FixedBarrierPolicy(4.2).describe()

    def test_is_stopping_policy(self):
        assert isinstance(FixedBarrierPolicy(0.0), StoppingPolicy)


class TestDrawdownBarrierPolicy:
    def test_follows_running_max(self, params):
        levels = DrawdownBarrierPolicy().barrier(params, np.array([4.5, 4.7]))
        np.testing.assert_allclose(levels, [4.5 - params.c, 4.7 - params.c])

    def test_describe(self):
        assert "x_bar - c" in DrawdownBarrierPolicy().describe()


class TestOptimalPolicy:
    def test_level_is_a_star(self, params):
        assert optimal_policy(params).level == optimal_barrier(params)

    def test_abstract(self):
        """Test that StoppingPolicy cannot be instantiated"""
        with pytest.raises(TypeError):
            StoppingPolicy()
