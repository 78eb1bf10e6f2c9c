from dataclasses import dataclass, field, asdict
from enum import Enum
import math

# Below this drawdown level λ(c, r) explodes and the contract terminates at once.
MIN_DRAWDOWN = 1e-6


class DrawdownPutError(ValueError):
    """Base class for every validation failure raised by the engine."""


class ParameterError(DrawdownPutError):
    """Invalid market or contract constants."""


class StateError(DrawdownPutError):
    """State outside the domain x <= x_bar, or outside a component's geometry."""


class DomainError(DrawdownPutError):
    """Argument outside the half-line on which a scale function is defined."""


class GridError(DrawdownPutError):
    """Empty or degenerate grid, or a finite-difference grid touching a boundary."""


class ConfigError(DrawdownPutError):
    """Malformed configuration file or run configuration."""


def _finite_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be a finite positive number, got {value!r}")


@dataclass(frozen=True)
class ModelParams:
    r: float
    sigma: float
    strike_k: float
    c: float

    def __post_init__(self):
        _finite_positive("r", self.r)
        _finite_positive("sigma", self.sigma)
        _finite_positive("strike_k", self.strike_k)
        # c = inf is admitted: the simulator uses it to switch the drawdown trigger off.
        if math.isnan(self.c) or self.c < MIN_DRAWDOWN:
            raise ParameterError(
                f"c must be at least {MIN_DRAWDOWN:g} (log drawdown level), got {self.c!r}"
            )

    @classmethod
    def from_drawdown_ratio(
        cls, r: float, sigma: float, strike_k: float, drawdown: float
    ) -> "ModelParams":
        """Build parameters from the relative drawdown e^c instead of its log."""
        if not drawdown > 1.0:
            raise ParameterError(f"drawdown ratio e^c must exceed 1, got {drawdown!r}")
        return cls(r=r, sigma=sigma, strike_k=strike_k, c=math.log(drawdown))

    @property
    def log_strike(self) -> float:
        return math.log(self.strike_k)

    @property
    def drawdown_ratio(self) -> float:
        return math.exp(self.c)

    def to_record(self) -> dict:
        return {"r": self.r, "sigma": self.sigma, "K": self.strike_k, "c": self.c}


@dataclass(frozen=True)
class MarketState:
    x: float
    x_bar: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.x_bar)):
            raise StateError(f"state must be finite, got x={self.x!r}, x_bar={self.x_bar!r}")
        if self.x > self.x_bar:
            raise StateError(
                f"state violates x <= x_bar: x={self.x!r} > x_bar={self.x_bar!r}"
            )

    @classmethod
    def from_prices(cls, spot: float, running_max: float) -> "MarketState":
        """Build a state from the spot price S_0 and the historical maximum."""
        if not (spot > 0 and running_max > 0):
            raise StateError(
                f"prices must be positive, got spot={spot!r}, running_max={running_max!r}"
            )
        return cls(x=math.log(spot), x_bar=math.log(running_max))

    @property
    def spot(self) -> float:
        return math.exp(self.x)


class Regime(str, Enum):
    DRAWDOWN_TRIGGERED = "DrawdownTriggered"
    STOPPED_AT_BARRIER = "StoppedAtBarrier"
    CONTINUATION_LOW_MAX = "ContinuationLowMax"
    CONTINUATION_HIGH_MAX = "ContinuationHighMax"
    EXHAUSTED_MAX = "ExhaustedMax"

    @property
    def pays_immediately(self) -> bool:
        """True where the value function equals the payoff."""
        return self not in (Regime.CONTINUATION_LOW_MAX, Regime.CONTINUATION_HIGH_MAX)


@dataclass(frozen=True)
class PriceBreakdown:
    value: float
    regime: Regime
    a_star: float
    components: dict[str, float] = field(default_factory=dict)

    def to_record(self) -> dict:
        record = {
            "value": self.value,
            "regime": self.regime.value,
            "a_star": self.a_star,
            "exp_a_star": math.exp(self.a_star),
        }
        record.update(self.components)
        return record


class StopReason(str, Enum):
    BARRIER = "Barrier"
    DRAWDOWN = "Drawdown"
    HORIZON_TRUNCATED = "HorizonTruncated"


@dataclass(frozen=True)
class StopOutcome:
    stop_time: float
    stop_x: float
    reason: StopReason


@dataclass(frozen=True)
class McConfig:
    n_paths: int
    dt: float
    t_max: float
    base_seed: int
    monitor_stride: int = 1
    n_workers: int = 1

    def __post_init__(self):
        if self.n_paths < 1:
            raise ParameterError(f"n_paths must be positive, got {self.n_paths!r}")
        _finite_positive("dt", self.dt)
        _finite_positive("t_max", self.t_max)
        if not 0 <= self.base_seed < 2**64:
            raise ParameterError(f"base_seed must fit in 64 bits, got {self.base_seed!r}")
        if self.monitor_stride < 1:
            raise ParameterError(
                f"monitor_stride must be positive, got {self.monitor_stride!r}"
            )
        if self.n_workers < 1:
            raise ParameterError(f"n_workers must be positive, got {self.n_workers!r}")

    @property
    def monitor_dt(self) -> float:
        """Time between two monitoring dates."""
        return self.dt * self.monitor_stride

    @property
    def n_monitor_points(self) -> int:
        return max(1, math.ceil(self.t_max / self.monitor_dt - 1e-9))

    @property
    def acceptance_grade(self) -> bool:
        return self.monitor_dt <= 1e-3

    def truncation_bound(self, params: ModelParams) -> float:
        """Upper bound e^{-r t_max} K on the value lost beyond the horizon."""
        return math.exp(-params.r * self.t_max) * params.strike_k


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float | None
    n_effective: int
    truncation_bound: float
    policy: str
    dt: float
    base_seed: int
    n_truncated: int = 0
    monitoring_bias_bound: float = 0.0
    extrapolated: bool = False

    def to_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CheckReport:
    check_name: str
    max_abs_residual: float
    tolerance: float
    passed: bool
    sample_points: int
    detail: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.passed != (self.max_abs_residual <= self.tolerance):
            raise ValueError(
                f"{self.check_name}: passed={self.passed} disagrees with "
                f"residual {self.max_abs_residual!r} and tolerance {self.tolerance!r}"
            )

    @classmethod
    def evaluate(
        cls,
        check_name: str,
        max_abs_residual: float,
        tolerance: float,
        sample_points: int,
        detail: dict[str, float] | None = None,
    ) -> "CheckReport":
        """Build a report whose pass flag follows from residual and tolerance."""
        residual = float(max_abs_residual)
        return cls(
            check_name=check_name,
            max_abs_residual=residual,
            tolerance=tolerance,
            # NaN compares False, so a NaN residual fails
            passed=residual <= tolerance,
            sample_points=sample_points,
            detail=dict(detail or {}),
        )

    def to_record(self) -> dict:
        return asdict(self)
