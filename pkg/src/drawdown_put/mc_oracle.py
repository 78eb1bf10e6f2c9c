"""
Monte Carlo estimator of the drawdown-capped put under a given stopping
policy. Independent of the closed form: it only simulates the log-price.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
import logging
import math

import numpy as np
import pandas as pd
from scipy.stats import norm

from .models import (
    GridError,
    MarketState,
    McConfig,
    McEstimate,
    ModelParams,
    ParameterError,
    StopOutcome,
    StopReason,
)
from .path_generator import INITIAL_CHUNK, increment_chunks, path_rng
from .policy import FixedBarrierPolicy, StoppingPolicy

logger = logging.getLogger(__name__)

# Broadie-Glasserman-Kou constant -zeta(1/2)/sqrt(2 pi): mean overshoot of a
# discretely monitored Brownian barrier in units of sigma sqrt(dt).
BETA_BGK = 0.5826

# V(dt) - V(0) ~ b sqrt(dt), so V(dt) + w (V(dt) - V(2 dt)) cancels b.
RICHARDSON_WEIGHT = 1.0 / (math.sqrt(2.0) - 1.0)

# Largest batch of paths handed to one worker process at a time.
_TASK_PATHS = 2048

_REASON_CODES = {
    StopReason.BARRIER: 0,
    StopReason.DRAWDOWN: 1,
    StopReason.HORIZON_TRUNCATED: 2,
}


def horizon_for_tolerance(params: ModelParams, tolerance: float = 1e-4) -> float:
    """Smallest t_max with e^{-r t_max} K <= tolerance K."""
    return math.log(1.0 / tolerance) / params.r


def monitoring_bias_bound(
    params: ModelParams,
    cfg: McConfig,
    state: MarketState | None = None,
    barrier: float | None = None,
) -> float:
    """
    Allowance for monitoring on the cfg.monitor_dt grid. A discrete path
    overshoots its stopping level by about BETA_BGK sigma sqrt(dt), and the
    payoff K - e^x moves by e^{level} times that: the level is the barrier
    for an exercise stop and x_bar - c for a drawdown stop, capped at log K
    where the payoff vanishes. Without a state the cap K is used.
    """
    shift = BETA_BGK * params.sigma * math.sqrt(cfg.monitor_dt)
    if state is None:
        return shift * params.strike_k
    level = state.x_bar - params.c
    if barrier is not None and math.isfinite(barrier):
        level = max(level, barrier)
    return shift * math.exp(min(level, params.log_strike))


def _check_thinning(thinning: tuple[int, ...]) -> None:
    if not thinning:
        raise ParameterError("at least one monitoring thinning is needed")
    for k in thinning:
        if k < 1 or INITIAL_CHUNK % k:
            raise ParameterError(
                f"thinning must be a positive divisor of {INITIAL_CHUNK}, got {k!r}"
            )


def _stop_ladder(
    params: ModelParams,
    state: MarketState,
    policy: StoppingPolicy,
    cfg: McConfig,
    path_index: int,
    thinning: tuple[int, ...],
) -> list[StopOutcome]:
    """
    Stops of one simulated path under several monitoring grids: thinning k
    looks only at every k-th monitoring date. Blocks hold a multiple of k
    dates, so every block starts on a date all grids share.
    """
    x, x_bar, c = state.x, state.x_bar, params.c
    if x <= x_bar - c:
        return [StopOutcome(0.0, x, StopReason.DRAWDOWN)] * len(thinning)
    if x <= float(policy.barrier(params, x_bar)):
        return [StopOutcome(0.0, x, StopReason.BARRIER)] * len(thinning)

    rng = path_rng(cfg.base_seed, path_index)
    total, mdt = cfg.n_monitor_points, cfg.monitor_dt
    peaks = dict.fromkeys(thinning, x_bar)
    stops: dict[int, StopOutcome] = {}
    done = 0
    for block in increment_chunks(params, cfg.dt, rng, cfg.monitor_stride):
        block = block[: total - done]
        path = x + np.cumsum(block)
        for k in thinning:
            if k in stops:
                continue
            seen = path[k - 1 :: k]
            if not len(seen):
                continue
            running = np.maximum(peaks[k], np.maximum.accumulate(seen))
            drawdown_hit = seen <= running - c
            hit = drawdown_hit | (seen <= policy.barrier(params, running))
            if hit.any():
                i = int(np.argmax(hit))
                reason = StopReason.DRAWDOWN if drawdown_hit[i] else StopReason.BARRIER
                stops[k] = StopOutcome((done + (i + 1) * k) * mdt, float(seen[i]), reason)
            else:
                peaks[k] = float(running[-1])
        x = float(path[-1])
        done += len(block)
        if len(stops) == len(thinning) or done >= total:
            break
    truncated = StopOutcome(total * mdt, x, StopReason.HORIZON_TRUNCATED)
    return [stops.get(k, truncated) for k in thinning]


def simulate_stop(
    params: ModelParams,
    state: MarketState,
    policy: StoppingPolicy,
    cfg: McConfig,
    path_index: int,
) -> StopOutcome:
    """
    First monitoring date at which the path is at or below the policy barrier
    or has drawn down by c from its running maximum (historical maximum
    included). A drawdown on the same date takes precedence.
    """
    return _stop_ladder(params, state, policy, cfg, path_index, (1,))[0]


def _simulate_range(
    params: ModelParams,
    state: MarketState,
    policy: StoppingPolicy,
    cfg: McConfig,
    start: int,
    stop: int,
    thinning: tuple[int, ...],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    shape = (len(thinning), stop - start)
    times, xs, codes = np.empty(shape), np.empty(shape), np.empty(shape, dtype=np.int8)
    for j, path_index in enumerate(range(start, stop)):
        for row, outcome in enumerate(
            _stop_ladder(params, state, policy, cfg, path_index, thinning)
        ):
            times[row, j], xs[row, j] = outcome.stop_time, outcome.stop_x
            codes[row, j] = _REASON_CODES[outcome.reason]
    return times, xs, codes


def _task_bounds(cfg: McConfig) -> list[tuple[int, int]]:
    n = cfg.n_paths
    size = max(1, min(_TASK_PATHS, math.ceil(n / (4 * cfg.n_workers))))
    starts = list(range(0, n, size))
    return [(lo, min(lo + size, n)) for lo in starts]


def simulate_ladder(
    params: ModelParams,
    state: MarketState,
    policy: StoppingPolicy,
    cfg: McConfig,
    thinning: tuple[int, ...] = (1,),
) -> dict[int, pd.DataFrame]:
    """
    Path outcomes on several monitoring grids from one set of paths. Key k
    holds one row per path index (stop_time, stop_x, reason) for monitoring
    every k-th date. Paths fan out over cfg.n_workers processes; rows are
    ordered by path index whatever the worker count.
    """
    thinning = tuple(thinning)
    _check_thinning(thinning)
    tasks = _task_bounds(cfg)
    workers = min(cfg.n_workers, len(tasks))
    if workers == 1:
        parts = [
            _simulate_range(params, state, policy, cfg, lo, hi, thinning) for lo, hi in tasks
        ]
    else:
        logger.debug("%d tasks over %d worker processes", len(tasks), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_simulate_range, params, state, policy, cfg, lo, hi, thinning)
                for lo, hi in tasks
            ]
            parts = [f.result() for f in futures]
    times = np.concatenate([p[0] for p in parts], axis=1)
    xs = np.concatenate([p[1] for p in parts], axis=1)
    codes = np.concatenate([p[2] for p in parts], axis=1)
    reasons = {code: reason.value for reason, code in _REASON_CODES.items()}
    return {
        k: pd.DataFrame(
            {
                "stop_time": times[row],
                "stop_x": xs[row],
                "reason": pd.Categorical([reasons[int(v)] for v in codes[row]]),
            }
        )
        for row, k in enumerate(thinning)
    }


def simulate_outcomes(
    params: ModelParams, state: MarketState, policy: StoppingPolicy, cfg: McConfig
) -> pd.DataFrame:
    """
    All path outcomes, one row per path index: stop_time, stop_x, reason.
    Rows are ordered by path index whatever the worker count.
    """
    return simulate_ladder(params, state, policy, cfg, (1,))[1]


def discounted_payoffs(params: ModelParams, outcomes: pd.DataFrame) -> np.ndarray:
    times = outcomes["stop_time"].to_numpy()
    xs = outcomes["stop_x"].to_numpy()
    return np.exp(-params.r * times) * np.maximum(params.strike_k - np.exp(xs), 0.0)


def _summarise(
    params: ModelParams,
    values: np.ndarray,
    n_truncated: int,
    policy: StoppingPolicy,
    cfg: McConfig,
    monitor_dt: float,
    bias_bound: float,
    extrapolated: bool = False,
) -> McEstimate:
    """
    Sums are exactly rounded (math.fsum), so the estimate does not depend on
    the worker count.

    The analytic e^{-r t_max} K bounds the value the horizon cuts off; each
    truncated path adds its own worst case e^{-r t_max} K / n on top.
    """
    n = len(values)
    mean = math.fsum(values) / n
    if n > 1:
        variance = math.fsum((values - mean) ** 2) / (n - 1)
        stderr = math.sqrt(variance / n)
    else:
        logger.warning("stderr undefined for a single path")
        stderr = None
    if n_truncated:
        logger.info(
            "%d of %d paths hit the horizon t_max=%g", n_truncated, n, cfg.t_max
        )
    return McEstimate(
        mean=mean,
        stderr=stderr,
        n_effective=n,
        truncation_bound=cfg.truncation_bound(params) * (1.0 + n_truncated / n),
        policy=policy.describe(),
        dt=monitor_dt,
        base_seed=cfg.base_seed,
        n_truncated=n_truncated,
        monitoring_bias_bound=bias_bound,
        extrapolated=extrapolated,
    )


def _count_truncated(outcomes: pd.DataFrame) -> int:
    return int((outcomes["reason"] == StopReason.HORIZON_TRUNCATED.value).sum())


def mc_price(
    params: ModelParams,
    state: MarketState,
    policy: StoppingPolicy,
    cfg: McConfig,
    extrapolate: bool = False,
) -> McEstimate:
    """
    Mean discounted payoff over cfg.n_paths paths.

    With extrapolate, every path is also monitored on every other date and
    its value becomes V(dt) + w (V(dt) - V(2 dt)), which removes the sqrt(dt)
    monitoring term; the reported bias allowance is then 0.
    """
    barrier = float(policy.barrier(params, state.x_bar))
    if not extrapolate:
        outcomes = simulate_outcomes(params, state, policy, cfg)
        estimate = _summarise(
            params,
            discounted_payoffs(params, outcomes),
            _count_truncated(outcomes),
            policy,
            cfg,
            cfg.monitor_dt,
            monitoring_bias_bound(params, cfg, state, barrier),
        )
    else:
        ladder = simulate_ladder(params, state, policy, cfg, (1, 2))
        fine = discounted_payoffs(params, ladder[1])
        coarse = discounted_payoffs(params, ladder[2])
        estimate = _summarise(
            params,
            fine + RICHARDSON_WEIGHT * (fine - coarse),
            max(_count_truncated(ladder[1]), _count_truncated(ladder[2])),
            policy,
            cfg,
            cfg.monitor_dt,
            0.0,
            extrapolated=True,
        )
    logger.debug("mc_price %s -> %s", state, estimate)
    return estimate


def mc_price_ladder(
    params: ModelParams,
    state: MarketState,
    policy: StoppingPolicy,
    cfg: McConfig,
    thinning: tuple[int, ...] = (4, 2, 1),
) -> dict[int, McEstimate]:
    """
    Estimates on coarser monitoring grids (every k-th date) from the same
    paths, keyed by k; common paths make the sequence comparable point to point.
    """
    barrier = float(policy.barrier(params, state.x_bar))
    ladder = simulate_ladder(params, state, policy, cfg, thinning)
    estimates = {}
    for k, outcomes in ladder.items():
        coarse = replace(cfg, monitor_stride=cfg.monitor_stride * k)
        estimates[k] = _summarise(
            params,
            discounted_payoffs(params, outcomes),
            _count_truncated(outcomes),
            policy,
            cfg,
            coarse.monitor_dt,
            monitoring_bias_bound(params, coarse, state, barrier),
        )
        logger.info("monitoring every %g: MC %.6f", coarse.monitor_dt, estimates[k].mean)
    return estimates


def barrier_search(
    params: ModelParams, state: MarketState, cfg: McConfig, grid
) -> tuple[float, pd.DataFrame]:
    """
    Grid argmax of mc_price over fixed barriers. Every candidate reuses the
    same seed, so the paths are common and the curve is comparable point to point.

    :return: best barrier and a value curve with columns barrier, exp_barrier, mean, stderr.
    """
    candidates = [float(b) for b in grid]
    if not candidates:
        raise GridError("barrier_search needs at least one candidate barrier")
    ceiling = min(state.x, params.log_strike)
    if any(b >= ceiling for b in candidates):
        logger.warning(
            "candidates at or above min(x, log K)=%g stop immediately", ceiling
        )
    rows = []
    for b in candidates:
        est = mc_price(params, state, FixedBarrierPolicy(b), cfg)
        rows.append(
            {"barrier": b, "exp_barrier": math.exp(b), "mean": est.mean, "stderr": est.stderr}
        )
    curve = pd.DataFrame(rows)
    best = float(curve.loc[curve["mean"].idxmax(), "barrier"])
    return best, curve


def european_put(params: ModelParams, x: float, maturity: float) -> float:
    """Black-Scholes put on S_0 = e^x with the same r and sigma."""
    sd = params.sigma * math.sqrt(maturity)
    k = params.strike_k
    d1 = (x - params.log_strike + (params.r + 0.5 * params.sigma**2) * maturity) / sd
    d2 = d1 - sd
    return k * math.exp(-params.r * maturity) * norm.cdf(-d2) - math.exp(x) * norm.cdf(-d1)
