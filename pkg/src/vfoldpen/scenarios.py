"""Simulation scenarios: regression function, noise level, sample size, models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError
from .functions import PiecewiseFunction, noise_function, regression_function


class CollectionKind(str, Enum):
    REGULAR = "Regular"
    TWO_BIN_SIZES = "TwoBinSizes"
    DYADIC = "Dyadic"
    DYADIC_TWO_BIN_SIZES = "DyadicTwoBinSizes"


@dataclass(frozen=True)
class RegressionScenario:
    """Data law ``Y = s(X) + sigma(X) * eps`` with ``X ~ U[0, 1)``, ``eps ~ N(0, 1)``."""

    name: str
    s_id: str
    sigma_id: str
    n: int
    collection_kind: CollectionKind
    sigma_level: float = 1.0

    @property
    def s(self) -> PiecewiseFunction:
        return regression_function(self.s_id)

    @property
    def sigma(self) -> PiecewiseFunction:
        return noise_function(self.sigma_id, self.sigma_level)

    def with_n(self, n: int) -> "RegressionScenario":
        return RegressionScenario(self.name, self.s_id, self.sigma_id, n, self.collection_kind, self.sigma_level)

    def mean_noise_variance(self) -> float:
        """Closed-form ``E[sigma(X)^2]`` for the supported noise shapes."""
        if self.sigma_id == "const":
            return self.sigma_level**2
        if self.sigma_id == "linear":
            return 1.0 / 3.0
        if self.sigma_id == "step":
            return 0.5
        raise ConfigError(f"unknown noise function {self.sigma_id!r}")


_K = CollectionKind
SCENARIOS: dict[str, RegressionScenario] = {
    sc.name: sc
    for sc in (
        RegressionScenario("S1", "sin", "const", 200, _K.REGULAR),
        RegressionScenario("S2", "sin", "linear", 200, _K.TWO_BIN_SIZES),
        RegressionScenario("HSd1", "heavisine", "const", 2048, _K.DYADIC),
        RegressionScenario("HSd2", "heavisine", "linear", 2048, _K.DYADIC_TWO_BIN_SIZES),
        RegressionScenario("S1000", "sin", "const", 1000, _K.REGULAR),
        RegressionScenario("Ssqrt0.1", "sin", "const", 200, _K.REGULAR, sigma_level=math.sqrt(0.1)),
        RegressionScenario("S0.1", "sin", "const", 200, _K.REGULAR, sigma_level=0.1),
        RegressionScenario("Svar2", "sin", "step", 200, _K.TWO_BIN_SIZES),
        RegressionScenario("Sqrt", "sqrt", "const", 200, _K.REGULAR),
        RegressionScenario("His6", "his6", "const", 200, _K.REGULAR),
        RegressionScenario("DopReg", "doppler", "const", 2048, _K.DYADIC),
        RegressionScenario("Dop2bin", "doppler", "const", 2048, _K.DYADIC_TWO_BIN_SIZES),
    )
}


def get_scenario(name: str) -> RegressionScenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}") from None


def linear_scenario(n: int, sigma: float) -> RegressionScenario:
    """``s(x) = x`` with constant noise and regular histograms."""
    return RegressionScenario(f"Linear(sigma={sigma:g})", "linear", "const", n, _K.REGULAR, sigma_level=sigma)


@dataclass(frozen=True)
class DataSet:
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or len(xs) < 1:
            raise ValueError("xs and ys must be 1-d arrays of equal positive length")
        xs.flags.writeable = False
        ys.flags.writeable = False
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return len(self.xs)


def generate(scenario: RegressionScenario, rng: np.random.Generator, noiseless: bool = False) -> DataSet:
    """Draw ``scenario.n`` i.i.d. observations."""
    xs = rng.random(scenario.n)
    eps = rng.standard_normal(scenario.n)
    ys = scenario.s(xs)
    if not noiseless:
        ys = ys + scenario.sigma(xs) * eps
    return DataSet(xs, ys)
