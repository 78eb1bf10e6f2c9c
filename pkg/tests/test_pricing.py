import math

import numpy as np
import pandas as pd
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq
from src.drawdown_put.models import MarketState, ModelParams, ParameterError, Regime, StateError
from src.drawdown_put.pricing import (
    barrier_root_residual,
    classify_regime,
    continuation_value_high,
    continuation_value_low,
    high_max_components,
    low_max_components,
    optimal_barrier,
    payoff,
    price,
    price_grid,
    price_value,
    v1,
    v2,
    v5,
    v6,
    v7,
    v8,
)
from src.drawdown_put.scale_fn import drawdown_max_density


class TestOptimalBarrier:
    def test_unit_params(self, unit_params):
        """Test a* = log 100 + tanh(log 2) log(0.375) for gamma = -1"""
        expected = math.log(100.0) + math.tanh(math.log(2.0)) * math.log(0.375)
        assert optimal_barrier(unit_params) == pytest.approx(expected, rel=1e-13)
        assert optimal_barrier(unit_params) == pytest.approx(4.0167, abs=1e-3)
        assert math.exp(optimal_barrier(unit_params)) == pytest.approx(55.5, abs=0.05)

    def test_reference_params(self, params):
        assert math.exp(optimal_barrier(params)) == pytest.approx(86.35, abs=0.05)

    @pytest.mark.parametrize("r", [0.01, 0.1, 0.3])
    @pytest.mark.parametrize("sigma", [0.05, 0.3, 0.6])
    @pytest.mark.parametrize("c", [0.05, 0.5, 2.0])
    def test_below_log_strike(self, r, sigma, c):
        p = ModelParams(r, sigma, 100.0, c)
        assert optimal_barrier(p) < p.log_strike

    def test_root_condition(self, params):
        """Test that a* zeroes the root condition and brentq recovers it"""
        a = optimal_barrier(params)
        assert barrier_root_residual(params, a) == pytest.approx(0.0, abs=1e-12)
        root = brentq(
            lambda b: barrier_root_residual(params, b),
            params.log_strike - 5.0,
            params.log_strike - 1e-9,
            xtol=1e-14,
        )
        assert root == pytest.approx(a, abs=1e-10)

    def test_scales_with_strike(self, params):
        """Test that a* - log K does not depend on K"""
        other = ModelParams(params.r, params.sigma, 7.0, params.c)
        assert optimal_barrier(params) - params.log_strike == pytest.approx(
            optimal_barrier(other) - other.log_strike, abs=1e-13
        )

    def test_infinite_drawdown_rejected(self):
        with pytest.raises(ParameterError):
            optimal_barrier(ModelParams(0.1, 0.2, 100.0, math.inf))


class TestPayoff:
    @pytest.mark.parametrize("spot,expected", [(100.0, 0.0), (80.0, 20.0), (120.0, 0.0)])
    def test_values(self, params, spot, expected):
        assert payoff(params, math.log(spot)) == pytest.approx(expected, abs=1e-12)

    def test_vectorised(self, params):
        values = payoff(params, np.log([50.0, 150.0]))
        np.testing.assert_allclose(values, [50.0, 0.0])


class TestClassifyRegime:
    def test_representative_states(self, params, states):
        for regime, state in states.items():
            assert classify_regime(params, state) is regime

    def test_drawdown_tie(self, params):
        """Test that x = x_bar - c resolves to DrawdownTriggered"""
        x_bar = params.log_strike
        state = MarketState(x_bar - params.c, x_bar)
        assert classify_regime(params, state) is Regime.DRAWDOWN_TRIGGERED

    def test_barrier_tie(self, params):
        a = optimal_barrier(params)
        state = MarketState(a, a + 0.5 * params.c)
        assert classify_regime(params, state) is Regime.STOPPED_AT_BARRIER

    def test_low_max_boundary_tie(self, params):
        """Test that x_bar = a* + c resolves to ContinuationHighMax"""
        a = optimal_barrier(params)
        state = MarketState(a + 0.5 * params.c, a + params.c)
        assert classify_regime(params, state) is Regime.CONTINUATION_HIGH_MAX

    def test_exhausted_tie(self, params):
        x_bar = params.log_strike + params.c
        assert classify_regime(params, MarketState(x_bar - 0.5 * params.c, x_bar)) is Regime.EXHAUSTED_MAX


class TestLowMaxComponents:
    def test_at_barrier(self, params):
        """Test v1 = K - e^a and v2 = 0 at x = a*"""
        a = optimal_barrier(params)
        state = MarketState(a, a + 0.5 * params.c)
        assert v1(params, state, a) == pytest.approx(params.strike_k - math.exp(a), rel=1e-14)
        assert v2(params, state, a) == 0.0

    def test_on_diagonal(self, params):
        """Test v1 = 0 and v2 = 1 at x = x_bar"""
        a = optimal_barrier(params)
        x_bar = a + 0.5 * params.c
        state = MarketState(x_bar, x_bar)
        assert v1(params, state, a) == 0.0
        assert v2(params, state, a) == pytest.approx(1.0, rel=1e-14)

    def test_coincident_limit(self, params):
        """Test that x = x_bar = a* gives v1 = 0 and v2 = 1"""
        a = optimal_barrier(params)
        state = MarketState(a, a)
        assert v1(params, state, a) == 0.0
        assert v2(params, state, a) == 1.0

    def test_v5_against_density(self, params):
        """Test V5 against the integral of the payoff over the max-gain density"""
        a = optimal_barrier(params)
        k = params.strike_k
        integral, _ = quad(
            lambda y: drawdown_max_density(params, y) * (k - math.exp(a + y)),
            0.0,
            params.log_strike - a,
            epsabs=1e-12,
        )
        assert v5(params, a) == pytest.approx(integral, abs=1e-9)

    @pytest.mark.parametrize("c", [5.0, 20.0])
    def test_v5_large_drawdown_against_density(self, c):
        """Test V5 where Delta K and e^{a+c} differ by many orders of magnitude"""
        p = ModelParams(0.1, 0.2, 100.0, c)
        a = optimal_barrier(p)
        k = p.strike_k
        integral, _ = quad(
            lambda y: drawdown_max_density(p, y) * (k - math.exp(a + y)),
            0.0,
            p.log_strike - a,
            epsabs=0.0,
            epsrel=1e-12,
        )
        assert integral > 0.0
        assert v5(p, a) == pytest.approx(integral, rel=1e-8)

    def test_geometry_rejected(self, params):
        a = optimal_barrier(params)
        with pytest.raises(StateError):
            v1(params, MarketState(a - 0.01, a + 0.1), a)
        with pytest.raises(StateError):
            low_max_components(params, MarketState(a + 0.1, a + 2 * params.c), a)

    def test_components_keys(self, params, states):
        a = optimal_barrier(params)
        parts = low_max_components(params, states[Regime.CONTINUATION_LOW_MAX], a)
        assert sorted(parts) == ["V1", "V2", "V3", "V4", "V5"]


class TestHighMaxComponents:
    def test_at_drawdown_boundary(self, params, states):
        """Test v6 = K - e^{x_bar - c} and v7 = 0 at x = x_bar - c"""
        x_bar = states[Regime.CONTINUATION_HIGH_MAX].x_bar
        x = x_bar - params.c + 1e-12
        state = MarketState(x, x_bar)
        assert v6(params, state) == pytest.approx(params.strike_k - math.exp(x_bar - params.c), rel=1e-9)
        assert v7(params, state) == pytest.approx(0.0, abs=1e-10)

    def test_on_diagonal(self, params, states):
        x_bar = states[Regime.CONTINUATION_HIGH_MAX].x_bar
        state = MarketState(x_bar, x_bar)
        assert v6(params, state) == pytest.approx(0.0, abs=1e-12)
        assert v7(params, state) == pytest.approx(1.0, rel=1e-12)

    def test_v8_vanishes_at_exhaustion(self, params):
        assert v8(params, params.log_strike + params.c) == pytest.approx(0.0, abs=1e-10)

    def test_v8_meets_v5(self, params):
        """Test that the two diagonal values agree at x_bar = a* + c"""
        a = optimal_barrier(params)
        assert v8(params, a + params.c) == pytest.approx(v5(params, a), rel=1e-12)

    def test_v8_against_density(self, params, states):
        x_bar = states[Regime.CONTINUATION_HIGH_MAX].x_bar
        k = params.strike_k
        integral, _ = quad(
            lambda y: drawdown_max_density(params, y) * (k - math.exp(x_bar - params.c + y)),
            0.0,
            params.log_strike + params.c - x_bar,
            epsabs=1e-12,
        )
        assert v8(params, x_bar) == pytest.approx(integral, abs=1e-9)

    @pytest.mark.parametrize("c", [5.0, 20.0])
    def test_v8_large_drawdown_against_density(self, c):
        p = ModelParams(0.1, 0.2, 100.0, c)
        x_bar = optimal_barrier(p) + c + 0.5 * (p.log_strike - optimal_barrier(p))
        k = p.strike_k
        integral, _ = quad(
            lambda y: drawdown_max_density(p, y) * (k - math.exp(x_bar - c + y)),
            0.0,
            p.log_strike + c - x_bar,
            epsabs=0.0,
            epsrel=1e-12,
        )
        assert integral > 0.0
        assert v8(p, x_bar) == pytest.approx(integral, rel=1e-8)

    def test_geometry_rejected(self, params):
        with pytest.raises(StateError):
            high_max_components(params, MarketState(4.0, params.log_strike + 2 * params.c))


class TestPrice:
    def test_stopping_regions_pay_payoff(self, params, states):
        for regime in (Regime.DRAWDOWN_TRIGGERED, Regime.STOPPED_AT_BARRIER, Regime.EXHAUSTED_MAX):
            state = states[regime]
            result = price(params, state)
            assert result.regime is regime
            assert result.value == pytest.approx(payoff(params, state.x), abs=1e-14)
            assert result.components == {}

    def test_drawdown_exact_tie(self, params):
        x_bar = params.log_strike
        state = MarketState(x_bar - params.c, x_bar)
        result = price(params, state)
        assert result.regime is Regime.DRAWDOWN_TRIGGERED
        assert result.value == pytest.approx(payoff(params, state.x))

    def test_exhausted_out_of_the_money(self, params):
        x_bar = params.log_strike + params.c + 0.2
        assert price_value(params, params.log_strike + 0.1, x_bar) == 0.0

    def test_continuation_low(self, params, states):
        state = states[Regime.CONTINUATION_LOW_MAX]
        result = price(params, state)
        assert result.regime is Regime.CONTINUATION_LOW_MAX
        assert result.value == pytest.approx(continuation_value_low(params, state.x, state.x_bar))
        assert result.value > payoff(params, state.x)

    def test_continuation_high(self, params, states):
        state = states[Regime.CONTINUATION_HIGH_MAX]
        result = price(params, state)
        assert result.value == pytest.approx(continuation_value_high(params, state.x, state.x_bar))
        assert set(result.components) == {"V6", "V7", "V8"}

    def test_spot_ninety(self, params):
        """Test S = 90 with max 100: holding is worth at least the payoff 10"""
        result = price(params, MarketState.from_prices(90.0, 100.0))
        assert result.regime is Regime.CONTINUATION_LOW_MAX
        assert result.value >= 10.0
        assert result.value <= params.strike_k

    def test_a_star_reported(self, params, states):
        assert price(params, states[Regime.CONTINUATION_LOW_MAX]).a_star == optimal_barrier(params)

    @pytest.mark.parametrize("shift", [-0.05, -0.02, 0.02])
    def test_optimal_barrier_dominates(self, params, states, shift):
        """Test that stopping at a* is worth at least stopping at a nearby barrier"""
        state = states[Regime.CONTINUATION_LOW_MAX]
        a = optimal_barrier(params)
        assert price_value(params, state.x, state.x_bar) >= price_value(
            params, state.x, state.x_bar, a + shift
        ) - 1e-12

    def test_value_in_bounds(self, params):
        for x_bar in np.linspace(4.3, 4.9, 13):
            for gap in np.linspace(0.0, 0.3, 7):
                v = price_value(params, float(x_bar - gap), float(x_bar))
                assert 0.0 <= v <= params.strike_k

    def test_infinite_drawdown_rejected(self):
        with pytest.raises(ParameterError):
            price(ModelParams(0.1, 0.2, 100.0, math.inf), MarketState(4.0, 4.0))

    def test_huge_drawdown_stays_finite(self):
        """Test pricing where e^c itself overflows a float"""
        p = ModelParams(0.1, 0.2, 100.0, 710.0)
        low = price(p, MarketState(p.log_strike, p.log_strike))
        assert low.regime is Regime.CONTINUATION_LOW_MAX
        assert all(math.isfinite(v) for v in low.components.values())
        assert 0.0 <= low.value <= p.strike_k
        x_bar = optimal_barrier(p) + p.c + 0.05
        high = price(p, MarketState(x_bar - 0.01, x_bar))
        assert high.regime is Regime.CONTINUATION_HIGH_MAX
        assert all(math.isfinite(v) for v in high.components.values())
        assert 0.0 <= high.value <= p.strike_k


class TestPriceGrid:
    def test_returns_dataframe(self, params):
        frame = price_grid(params, np.log([90.0, 95.0]), np.log([100.0, 100.0]))
        assert isinstance(frame, pd.DataFrame)
        assert list(frame.columns) == ["x", "xbar", "regime", "price"]
        assert len(frame) == 2

    def test_matches_price(self, params):
        frame = price_grid(params, [math.log(90.0)], [math.log(100.0)])
        assert frame["price"].iloc[0] == price_value(params, math.log(90.0), math.log(100.0))

    def test_shape_mismatch_rejected(self, params):
        with pytest.raises(StateError):
            price_grid(params, [4.0, 4.1], [4.5])
