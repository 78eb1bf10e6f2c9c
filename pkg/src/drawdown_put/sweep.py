# sweep.py

from dataclasses import replace
from pathlib import Path
from typing import Iterable, TextIO
import io
import itertools
import logging
import math

import numpy as np
import pandas as pd

from .models import GridError, MarketState, ModelParams, ParameterError, StateError
from .pricing import price

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["x", "xbar", "r", "sigma", "c", "K", "a_star", "exp_a_star", "regime", "price"]

# Axis ranges of the bundled presets.
FIGURE_PRICE_RANGE = (50.0, 130.0)
FIGURE_R_RANGE = (0.01, 0.2)
FIGURE_SIGMA_RANGE = (0.1, 0.5)


def _axis(values, name: str) -> np.ndarray | None:
    if values is None:
        return None
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise GridError(f"sweep axis {name} is empty")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"sweep axis {name} contains non-finite values")
    return arr


def sweep_grid(
    params: ModelParams,
    state: MarketState | None = None,
    xs: Iterable[float] | None = None,
    xbars: Iterable[float] | None = None,
    rs: Iterable[float] | None = None,
    sigmas: Iterable[float] | None = None,
    keep_domain_only: bool = True,
) -> pd.DataFrame:
    """
    Prices the Cartesian product of the given axes. Axes left out fall back to
    the state (x, x_bar) or to params (r, sigma).

    :param keep_domain_only: drop (x, x_bar) pairs with x > x_bar instead of raising.
    :return: long-format DataFrame with columns SWEEP_COLUMNS, one row per grid point.
    """
    axes = {
        "x": _axis(xs, "x"),
        "xbar": _axis(xbars, "xbar"),
        "r": _axis(rs, "r"),
        "sigma": _axis(sigmas, "sigma"),
    }
    if all(a is None for a in axes.values()):
        raise GridError("a sweep needs at least one axis")
    if state is None and axes["x"] is None and axes["xbar"] is None:
        raise GridError("a sweep without x and xbar axes needs a state")
    rs = axes["r"] if axes["r"] is not None else [params.r]
    sigmas = axes["sigma"] if axes["sigma"] is not None else [params.sigma]

    if state is None and (axes["x"] is None or axes["xbar"] is None):
        # a single log-price axis without a state sweeps the diagonal x = x_bar
        line = axes["x"] if axes["x"] is not None else axes["xbar"]
        pairs = [(float(p), float(p)) for p in line]
    else:
        x_axis = axes["x"] if axes["x"] is not None else [state.x]
        xbar_axis = axes["xbar"] if axes["xbar"] is not None else [state.x_bar]
        pairs = [(float(x), float(xb)) for xb, x in itertools.product(xbar_axis, x_axis)]
    inside = [(x, xb) for x, xb in pairs if x <= xb]
    if len(inside) < len(pairs):
        if not keep_domain_only:
            x, xb = next(p for p in pairs if p[0] > p[1])
            raise StateError(f"sweep point violates x <= x_bar: x={x!r}, x_bar={xb!r}")
        logger.debug("dropped %d grid points with x > x_bar", len(pairs) - len(inside))
    if not inside:
        raise GridError("sweep grid has no point inside the domain x <= x_bar")

    rows = []
    for r, sigma in itertools.product(rs, sigmas):
        point_params = replace(params, r=float(r), sigma=float(sigma))
        rows += [_row(point_params, MarketState(x, xb)) for x, xb in inside]
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def _row(params: ModelParams, state: MarketState) -> dict:
    breakdown = price(params, state)
    a = breakdown.a_star
    return {
        "x": state.x,
        "xbar": state.x_bar,
        "r": params.r,
        "sigma": params.sigma,
        "c": params.c,
        "K": params.strike_k,
        "a_star": a,
        "exp_a_star": math.exp(a),
        "regime": breakdown.regime.value,
        "price": breakdown.value,
    }


def figure_grid(
    figure: int,
    params: ModelParams,
    n_points: int = 81,
    price_range: tuple[float, float] = FIGURE_PRICE_RANGE,
    r_range: tuple[float, float] = FIGURE_R_RANGE,
    sigma_range: tuple[float, float] = FIGURE_SIGMA_RANGE,
) -> pd.DataFrame:
    """
    Preset sweeps:
      1. price against spot at x_bar = log K, spots from 50% of K to K;
      2. price over (x, x_bar), both spanning price_range;
      3. and 4. a* and price over (r, sigma) at x = x_bar = log K
         (the same frame; preset 3 reads exp_a_star, preset 4 reads price).
    """
    if n_points < 2:
        raise GridError(f"figure grids need at least 2 points per axis, got {n_points}")
    log_k = params.log_strike
    if figure == 1:
        spots = np.linspace(0.5 * params.strike_k, params.strike_k, n_points)
        return sweep_grid(params, MarketState(log_k, log_k), xs=np.log(spots))
    if figure == 2:
        logs = np.log(np.linspace(*price_range, n_points))
        return sweep_grid(params, xs=logs, xbars=logs)
    if figure in (3, 4):
        return sweep_grid(
            params,
            MarketState(log_k, log_k),
            rs=np.linspace(*r_range, n_points),
            sigmas=np.linspace(*sigma_range, n_points),
        )
    raise ParameterError(f"figure must be 1, 2, 3 or 4, got {figure!r}")


def _direction(values: np.ndarray, tol: float) -> str:
    steps = np.diff(values)
    if steps.size == 0 or np.all(np.abs(steps) <= tol):
        return "constant"
    if np.all(steps >= -tol):
        return "nondecreasing"
    if np.all(steps <= tol):
        return "nonincreasing"
    return "mixed"


def monotonicity_summary(
    frame: pd.DataFrame, columns: Iterable[str] = ("exp_a_star", "price"), tol: float = 1e-12
) -> dict[str, str]:
    """
    Direction of each column along r at every fixed sigma, and along sigma at
    every fixed r; a direction holds only when it holds on every slice.

    :return: e.g. {"exp_a_star_in_r": "nondecreasing", "price_in_sigma": "mixed"}.
    """
    summary = {}
    for column in columns:
        for axis, other in (("r", "sigma"), ("sigma", "r")):
            found = set()
            for _, group in frame.groupby(other, sort=True):
                ordered = group.sort_values(axis)
                scale = max(1.0, float(ordered[column].abs().max()))
                found.add(_direction(ordered[column].to_numpy(), tol * scale))
            found.discard("constant")
            if not found:
                summary[f"{column}_in_{axis}"] = "constant"
            elif len(found) == 1:
                summary[f"{column}_in_{axis}"] = found.pop()
            else:
                summary[f"{column}_in_{axis}"] = "mixed"
    return summary


def header_lines(metadata: dict) -> list[str]:
    return [f"# {key}={value}" for key, value in metadata.items()]


def write_sweep_csv(frame: pd.DataFrame, out: str | Path | TextIO, metadata: dict | None = None) -> None:
    """
    Writes '# key=value' comment lines, then the CSV with 17 significant
    digits. Read it back with pd.read_csv(path, comment="#").
    """
    buffer = io.StringIO()
    for line in header_lines(metadata or {}):
        buffer.write(line + "\n")
    frame.to_csv(buffer, columns=SWEEP_COLUMNS, float_format="%.17g", index=False, lineterminator="\n")
    text = buffer.getvalue()
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8")
        logger.info("wrote %d rows to %s", len(frame), out)
    else:
        out.write(text)
