# drawdown_put/policy.py
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .models import ModelParams
from .pricing import optimal_barrier


class StoppingPolicy(ABC):
    """Exercise rule simulated by the Monte Carlo oracle.

    The drawdown epoch always ends the contract; a policy only adds a level at
    or below which the holder exercises voluntarily.
    """

    @abstractmethod
    def barrier(self, params: ModelParams, x_bar):
        """Exercise log level given the running log maximum (scalar or array)."""

    @abstractmethod
    def describe(self) -> str:
        pass


@dataclass(frozen=True)
class FixedBarrierPolicy(StoppingPolicy):
    level: float

    def barrier(self, params: ModelParams, x_bar):
        return np.full_like(np.asarray(x_bar, dtype=float), self.level)

    def describe(self) -> str:
        return f"fixed barrier a={self.level!r}"


@dataclass(frozen=True)
class DrawdownBarrierPolicy(StoppingPolicy):
    """Never exercise early: stop only at the moving barrier x_bar_t - c."""

    def barrier(self, params: ModelParams, x_bar):
        return np.asarray(x_bar, dtype=float) - params.c

    def describe(self) -> str:
        return "moving barrier x_bar - c"


def optimal_policy(params: ModelParams) -> FixedBarrierPolicy:
    """Exercise at a*, or at the drawdown epoch, whichever comes first."""
    return FixedBarrierPolicy(optimal_barrier(params))
