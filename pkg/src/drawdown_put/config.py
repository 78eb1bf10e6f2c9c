# config.py

from dataclasses import dataclass, field
from pathlib import Path
import logging
import math

import numpy as np

from .models import (
    ConfigError,
    MarketState,
    McConfig,
    ModelParams,
)

logger = logging.getLogger(__name__)

COMMANDS = ("price", "barrier", "sweep", "verify", "mc")
STATE_COMMANDS = ("price", "mc")
OUTPUT_FORMATS = ("csv", "json")

# Reference market: r = 0.1, sigma = 0.2, K = 100, e^c = 1.2.
DEFAULT_R = 0.1
DEFAULT_SIGMA = 0.2
DEFAULT_STRIKE = 100.0
DEFAULT_DRAWDOWN = 1.2

DEFAULT_PATHS = 20_000
DEFAULT_DT = 1e-3
DEFAULT_SEED = 20240101
DEFAULT_TRUNCATION_TOL = 1e-4

_TRUE = {"true", "yes", "on"}
_FALSE = {"false", "no", "off"}


@dataclass(frozen=True)
class OutputSpec:
    path: Path | None = None
    format: str = "csv"

    def __post_init__(self):
        if self.format not in OUTPUT_FORMATS:
            raise ConfigError(f"output format must be one of {OUTPUT_FORMATS}, got {self.format!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs, validated up front."""

    command: str
    model: ModelParams
    state: MarketState | None = None
    sweep_axes: dict[str, np.ndarray] = field(default_factory=dict)
    mc: McConfig | None = None
    output: OutputSpec = field(default_factory=OutputSpec)
    figure: int | None = None
    figure_points: int = 81
    perturb_astar: float = 0.0
    skip_mc: bool = False
    extrapolate: bool = False
    path_out: Path | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}, got {self.command!r}")
        paired = "xs" in self.sweep_axes and "xbars" in self.sweep_axes
        if self.command in STATE_COMMANDS and self.state is None:
            if not (self.command == "price" and paired):
                raise ConfigError(
                    f"command {self.command!r} needs a state: pass --x and --xbar"
                    + (" or both --x-grid and --xbar-grid" if self.command == "price" else "")
                )
        if self.command == "mc" and self.mc is None:
            raise ConfigError("command 'mc' needs a Monte Carlo configuration")
        if self.command == "sweep" and self.figure is None and not self.sweep_axes:
            raise ConfigError("command 'sweep' needs --figure or at least one axis")
        if not math.isfinite(self.perturb_astar):
            raise ConfigError(f"perturb_astar must be finite, got {self.perturb_astar!r}")

    def header(self) -> dict:
        """Parameters and seed, as written to output headers and the log."""
        meta = {"command": self.command, **self.model.to_record()}
        if self.state is not None:
            meta.update({"x": self.state.x, "xbar": self.state.x_bar})
        if self.mc is not None:
            meta.update(
                {
                    "n_paths": self.mc.n_paths,
                    "dt": self.mc.dt,
                    "t_max": self.mc.t_max,
                    "seed": self.mc.base_seed,
                }
            )
        if self.figure is not None:
            meta["figure"] = self.figure
        if self.perturb_astar:
            meta["perturb_astar"] = self.perturb_astar
        return meta


def parse_grid(text: str, name: str = "grid") -> np.ndarray:
    """
    Parses an axis: either "lo:hi:n" (n evenly spaced points, ends included)
    or a comma-separated list.
    """
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"{name} range must look like lo:hi:n, got {text!r}")
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise ConfigError(f"cannot parse {name} {text!r}: {exc}") from exc
        if n < 1:
            raise ConfigError(f"{name} range needs at least one point, got n={n}")
        return np.linspace(lo, hi, n)
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name} {text!r}: {exc}") from exc
    if not values:
        raise ConfigError(f"{name} is empty")
    return np.array(values)


def _coerce(value: str):
    lowered = value.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    return value


def load_config_file(path: str | Path, known_keys: set[str] | None = None) -> dict:
    """
    Reads 'key = value' lines. '#' starts a comment, dashes in keys become
    underscores so keys can be spelled like the long flags, and true/false
    values become booleans. Other values stay strings for the flag parser to convert.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if not key or not value:
            raise ConfigError(f"{path}:{number}: empty key or value")
        if known_keys is not None and key not in known_keys:
            raise ConfigError(f"{path}:{number}: unknown key {key!r}")
        values[key] = _coerce(value)
    logger.debug("loaded %d settings from %s", len(values), path)
    return values
