# path_generator.py

from dataclasses import dataclass
from typing import Iterator
import math

import numpy as np
import pandas as pd

from .models import MarketState, ModelParams

_MASK64 = (1 << 64) - 1

INITIAL_CHUNK = 1024
MAX_CHUNK = 65536


@dataclass(frozen=True)
class PathPoint:
    t: float
    x: float
    x_bar: float


def path_rng(base_seed: int, path_index: int) -> np.random.Generator:
    """
    Counter-based stream for one path: Philox keyed by (base_seed, path_index).

    The same pair always yields the same normals, whichever worker runs the
    path and in whatever order.
    """
    key = np.array([base_seed & _MASK64, path_index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def log_increments(
    params: ModelParams, dt: float, rng: np.random.Generator, n: int
) -> np.ndarray:
    """
    Exact increments of X over n steps of length dt:
    N((r - sigma^2/2) dt, sigma^2 dt), no discretisation error at grid points.
    """
    drift = (params.r - 0.5 * params.sigma**2) * dt
    vol = params.sigma * math.sqrt(dt)
    return drift + vol * rng.standard_normal(n)


def increment_chunks(
    params: ModelParams, dt: float, rng: np.random.Generator, stride: int = 1
) -> Iterator[np.ndarray]:
    """
    Yields blocks of increments between monitoring dates, stride fine steps
    apart. Blocks start small and double, since most paths stop early.
    """
    chunk = INITIAL_CHUNK
    while True:
        fine = log_increments(params, dt, rng, chunk * stride)
        if stride == 1:
            yield fine
        else:
            yield fine.reshape(chunk, stride).sum(axis=1)
        chunk = min(2 * chunk, MAX_CHUNK)


def log_price_generator(
    params: ModelParams,
    state: MarketState,
    dt: float,
    base_seed: int,
    path_index: int = 0,
) -> Iterator[PathPoint]:
    """
    Simulates the log-price and its running maximum on the grid k * dt,
    starting from the historical maximum x_bar.

    :yield: PathPoint(t, x, x_bar), starting with the initial state at t = 0.
    """
    rng = path_rng(base_seed, path_index)
    x, x_bar, step = state.x, state.x_bar, 0
    yield PathPoint(t=0.0, x=x, x_bar=x_bar)
    for block in increment_chunks(params, dt, rng):
        for dx in block:
            x += float(dx)
            x_bar = max(x_bar, x)
            step += 1
            yield PathPoint(t=step * dt, x=x, x_bar=x_bar)


def sample_path(
    params: ModelParams,
    state: MarketState,
    dt: float,
    n_steps: int,
    base_seed: int,
    path_index: int = 0,
) -> pd.DataFrame:
    """
    Returns one simulated path as a DataFrame with columns t, x, x_bar and
    drawdown (x_bar - x), n_steps + 1 rows including t = 0.
    """
    gen = log_price_generator(params, state, dt, base_seed, path_index)
    points = [next(gen) for _ in range(n_steps + 1)]
    frame = pd.DataFrame(
        {
            "t": [p.t for p in points],
            "x": [p.x for p in points],
            "x_bar": [p.x_bar for p in points],
        }
    )
    frame["drawdown"] = frame["x_bar"] - frame["x"]
    return frame
