"""
Closed-form price of the perpetual American put capped by the first drawdown
of size e^c, and its optimal exercise barrier a*.

Below x_bar < a* + c the holder exercises when the log-price first falls to a*;
above it the contract simply waits for the drawdown epoch.
"""

from functools import lru_cache
import logging
import math

import numpy as np
import pandas as pd

from .models import (
    MarketState,
    ModelParams,
    ParameterError,
    PriceBreakdown,
    Regime,
    StateError,
)
from .scale_fn import (
    delta_c,
    exit_above,
    exit_below,
    gamma,
    lambda_c,
    log_lambda_excess,
)

logger = logging.getLogger(__name__)

# Log-space slack for regime ties, so states built as x_bar - c land on the boundary.
TIE_TOL = 1e-12


def _require_finite_drawdown(params: ModelParams) -> None:
    if not math.isfinite(params.c):
        raise ParameterError("pricing needs a finite drawdown level c")


@lru_cache(maxsize=1024)
def optimal_barrier(params: ModelParams) -> float:
    """a* = log K + log(gamma (e^{gamma c} - e^c) / ((1 - gamma) e^c)) * W(c)/W'(c)."""
    _require_finite_drawdown(params)
    g = gamma(params)
    # gamma (e^{gamma c} - e^c) / ((1 - gamma) e^c), written without e^c overflow
    base = -g * -math.expm1((g - 1.0) * params.c) / (1.0 - g)
    return params.log_strike + math.log(base) / lambda_c(params, params.c)


def barrier_root_residual(params: ModelParams, a: float) -> float:
    """1 - ((1-gamma) e^c / (e^c - gamma e^{gamma c})) (1 - e^{-lambda (log K - a)}); zero at a*."""
    g = gamma(params)
    lam = lambda_c(params, params.c)
    factor = (1.0 - g) / (1.0 - g * math.exp((g - 1.0) * params.c))
    return 1.0 - factor * -math.expm1(-lam * (params.log_strike - a))


def _barrier(params: ModelParams, a_star: float | None) -> float:
    return optimal_barrier(params) if a_star is None else a_star


def classify_regime(
    params: ModelParams, state: MarketState, a_star: float | None = None
) -> Regime:
    _require_finite_drawdown(params)
    a = _barrier(params, a_star)
    x, x_bar, c = state.x, state.x_bar, params.c
    if x <= x_bar - c + TIE_TOL:
        return Regime.DRAWDOWN_TRIGGERED
    if x_bar < a + c - TIE_TOL:
        return Regime.STOPPED_AT_BARRIER if x <= a + TIE_TOL else Regime.CONTINUATION_LOW_MAX
    if x_bar < params.log_strike + c - TIE_TOL:
        return Regime.CONTINUATION_HIGH_MAX
    return Regime.EXHAUSTED_MAX


def payoff(params: ModelParams, x):
    """(K - e^x)^+."""
    value = np.maximum(params.strike_k - np.exp(np.asarray(x, dtype=float)), 0.0)
    return value.item() if value.ndim == 0 else value


def _low_max_geometry(params: ModelParams, x: float, x_bar: float, a: float) -> None:
    if not (a - TIE_TOL <= x <= x_bar and x_bar < a + params.c + TIE_TOL):
        raise StateError(
            f"low-max components need a <= x <= x_bar < a + c; "
            f"got a={a!r}, x={x!r}, x_bar={x_bar!r}, c={params.c!r}"
        )


def _high_max_geometry(
    params: ModelParams, x: float, x_bar: float, a_star: float | None
) -> None:
    c = params.c
    a = _barrier(params, a_star)
    if not (
        x_bar - c < x <= x_bar
        and a + c - TIE_TOL <= x_bar <= params.log_strike + c + TIE_TOL
    ):
        raise StateError(
            f"high-max components need x_bar - c < x <= x_bar and "
            f"a + c <= x_bar <= log K + c; got a={a!r}, x={x!r}, x_bar={x_bar!r}"
        )


def v1(params: ModelParams, state: MarketState, a_star: float) -> float:
    """(K - e^a)(Z(x-a) - Z(x_bar-a) W(x-a)/W(x_bar-a))."""
    _low_max_geometry(params, state.x, state.x_bar, a_star)
    s, t = max(state.x - a_star, 0.0), max(state.x_bar - a_star, 0.0)
    if t == 0.0:
        return 0.0
    return (params.strike_k - math.exp(a_star)) * exit_below(params, s, t)


def v2(params: ModelParams, state: MarketState, a_star: float) -> float:
    """W(x-a)/W(x_bar-a); the coincident limit x = x_bar = a is 1."""
    _low_max_geometry(params, state.x, state.x_bar, a_star)
    s, t = max(state.x - a_star, 0.0), max(state.x_bar - a_star, 0.0)
    if t == 0.0:
        return 1.0
    return exit_above(params, s, t)


def v3(params: ModelParams, x_bar: float, a_star: float) -> float:
    """(K - e^a)(Z(x_bar-a) - Z(c) W(x_bar-a)/W(c))."""
    _low_max_geometry(params, x_bar, x_bar, a_star)
    return (params.strike_k - math.exp(a_star)) * exit_below(
        params, max(x_bar - a_star, 0.0), params.c
    )


def v4(params: ModelParams, x_bar: float, a_star: float) -> float:
    """W(x_bar-a)/W(c)."""
    _low_max_geometry(params, x_bar, x_bar, a_star)
    return exit_above(params, max(x_bar - a_star, 0.0), params.c)


def _scaled_gap(log_scale: float, log_excess: float, dist: float) -> float:
    """
    e^{log_scale} (1 - e^{-(lambda - 1) dist}) given log(lambda - 1), without
    forming the possibly overflowing e^{log_scale} on its own.
    """
    if dist == 0.0:
        return 0.0
    sign = 1.0 if dist > 0.0 else -1.0
    log_y = log_excess + math.log(abs(dist))
    y = math.exp(min(log_y, 700.0))
    if y < 1e-8:
        log_gap = log_y - sign * 0.5 * y
    else:
        log_gap = math.log(abs(math.expm1(-sign * y)))
    return sign * math.exp(log_scale + log_gap)


def v5(params: ModelParams, a_star: float) -> float:
    """
    Value at (a + c, a + c): the discounted payoff K - e^{a + Y} paid at the
    drawdown epoch, where the running-maximum gain Y has density Delta lambda e^{-lambda y}
    up to L = log K - a. Integrated, with Delta / (1 - lambda) = -e^c / lambda:
    Delta K - e^{a + c} (lambda - e^{-(lambda - 1) L}) / lambda,
    which is Delta (K - e^a) - (e^{a + c} / lambda)(1 - e^{-(lambda - 1) L}).
    """
    _require_finite_drawdown(params)
    c = params.c
    lam = lambda_c(params, c)
    delta = delta_c(params, c)
    reach = params.log_strike - a_star
    gap = _scaled_gap(a_star + c - math.log(lam), log_lambda_excess(params, c), reach)
    return delta * (params.strike_k - math.exp(a_star)) - gap


def v6(
    params: ModelParams, state: MarketState, a_star: float | None = None
) -> float:
    """(K - e^{x_bar-c})(Z(x+c-x_bar) - Z(c) W(x+c-x_bar)/W(c))."""
    _high_max_geometry(params, state.x, state.x_bar, a_star)
    c = params.c
    return (params.strike_k - math.exp(state.x_bar - c)) * exit_below(
        params, state.x + c - state.x_bar, c
    )


def v7(
    params: ModelParams, state: MarketState, a_star: float | None = None
) -> float:
    """W(x+c-x_bar)/W(c)."""
    _high_max_geometry(params, state.x, state.x_bar, a_star)
    return exit_above(params, state.x + params.c - state.x_bar, params.c)


def v8(params: ModelParams, x_bar: float, a_star: float | None = None) -> float:
    """
    Value on the diagonal x = x_bar above a* + c. With D = log K + c - x_bar:
    Delta K (1 - e^{-lambda D}) - e^{x_bar} (1 - e^{-(lambda - 1) D}).
    """
    _high_max_geometry(params, x_bar, x_bar, a_star)
    c = params.c
    lam = lambda_c(params, c)
    delta = delta_c(params, c)
    room = params.log_strike + c - x_bar
    return delta * params.strike_k * -math.expm1(-lam * room) - _scaled_gap(
        x_bar, log_lambda_excess(params, c), room
    )


def low_max_components(
    params: ModelParams, state: MarketState, a_star: float
) -> dict[str, float]:
    return {
        "V1": v1(params, state, a_star),
        "V2": v2(params, state, a_star),
        "V3": v3(params, state.x_bar, a_star),
        "V4": v4(params, state.x_bar, a_star),
        "V5": v5(params, a_star),
    }


def high_max_components(
    params: ModelParams, state: MarketState, a_star: float | None = None
) -> dict[str, float]:
    return {
        "V6": v6(params, state, a_star),
        "V7": v7(params, state, a_star),
        "V8": v8(params, state.x_bar, a_star),
    }


def continuation_value_low(
    params: ModelParams, x: float, x_bar: float, a_star: float | None = None
) -> float:
    """V1 + V2 (V3 + V4 V5), evaluated without regime dispatch."""
    a = _barrier(params, a_star)
    parts = low_max_components(params, MarketState(x, x_bar), a)
    return parts["V1"] + parts["V2"] * (parts["V3"] + parts["V4"] * parts["V5"])


def continuation_value_high(
    params: ModelParams, x: float, x_bar: float, a_star: float | None = None
) -> float:
    """V6 + V7 V8, evaluated without regime dispatch."""
    parts = high_max_components(params, MarketState(x, x_bar), a_star)
    return parts["V6"] + parts["V7"] * parts["V8"]


def price(
    params: ModelParams, state: MarketState, a_star: float | None = None
) -> PriceBreakdown:
    """
    Value V(x, x_bar) with its regime and components.

    Passing a_star prices the policy "exercise at a_star" instead of the
    optimal one; the formulas stay the exact value of that policy.
    """
    a = _barrier(params, a_star)
    regime = classify_regime(params, state, a)
    if regime is Regime.CONTINUATION_LOW_MAX:
        parts = low_max_components(params, state, a)
        value = parts["V1"] + parts["V2"] * (parts["V3"] + parts["V4"] * parts["V5"])
    elif regime is Regime.CONTINUATION_HIGH_MAX:
        parts = high_max_components(params, state, a)
        value = parts["V6"] + parts["V7"] * parts["V8"]
    else:
        parts = {}
        value = payoff(params, state.x)
    logger.debug("price x=%r x_bar=%r -> %s %.12g", state.x, state.x_bar, regime.value, value)
    return PriceBreakdown(value=float(value), regime=regime, a_star=a, components=parts)


def price_value(
    params: ModelParams, x: float, x_bar: float, a_star: float | None = None
) -> float:
    return price(params, MarketState(x, x_bar), a_star).value


def price_grid(
    params: ModelParams, xs, x_bars, a_star: float | None = None
) -> pd.DataFrame:
    """
    Prices every pair (x, x_bar) of two equal-length arrays.

    :return: DataFrame with columns x, xbar, regime, price.
    """
    xs = np.asarray(xs, dtype=float)
    x_bars = np.asarray(x_bars, dtype=float)
    if xs.shape != x_bars.shape:
        raise StateError(f"x and x_bar grids differ in shape: {xs.shape} vs {x_bars.shape}")
    a = _barrier(params, a_star)
    results = [price(params, MarketState(float(x), float(xb)), a) for x, xb in zip(xs.ravel(), x_bars.ravel())]
    return pd.DataFrame(
        {
            "x": xs.ravel(),
            "xbar": x_bars.ravel(),
            "regime": [b.regime.value for b in results],
            "price": [b.value for b in results],
        }
    )
