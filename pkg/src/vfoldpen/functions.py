"""Regression and noise-level functions used by the simulation scenarios.

Every function is vectorized over numpy arrays and comes with the list of
points in (0, 1) where it is discontinuous, so that quadrature can split
cells there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UnknownFunction

# Step values of the His6 regression function on the regular 6-cell partition.
HIS6_VALUES = (1.5, -0.5, 1.0, -1.0, 0.5, -1.5)
DOPPLER_EPS = 0.05


@dataclass(frozen=True)
class PiecewiseFunction:
    """A real function on [0, 1) with known discontinuity points."""

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    jumps: tuple[float, ...] = ()
    # Oscillating functions get an extra dyadic refinement near this point.
    singular_at: float | None = None

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


def _heavisine(x):
    return 4.0 * np.sin(4.0 * np.pi * x) - np.sign(x - 0.3) - np.sign(0.72 - x)


def _doppler(x):
    return np.sqrt(x * (1.0 - x)) * np.sin(2.0 * np.pi * (1.0 + DOPPLER_EPS) / (x + DOPPLER_EPS))


def _his6(x):
    idx = np.clip(np.floor(x * 6.0).astype(int), 0, 5)
    return np.asarray(HIS6_VALUES)[idx]


REGRESSION_FUNCTIONS: dict[str, PiecewiseFunction] = {
    "sin": PiecewiseFunction("sin", lambda x: np.sin(np.pi * x)),
    "linear": PiecewiseFunction("linear", lambda x: x.copy()),
    "sqrt": PiecewiseFunction("sqrt", np.sqrt, singular_at=0.0),
    "heavisine": PiecewiseFunction("heavisine", _heavisine, jumps=(0.3, 0.72)),
    "doppler": PiecewiseFunction("doppler", _doppler, singular_at=0.0),
    "his6": PiecewiseFunction("his6", _his6, jumps=tuple(k / 6 for k in range(1, 6))),
}


def regression_function(s_id: str) -> PiecewiseFunction:
    try:
        return REGRESSION_FUNCTIONS[s_id]
    except KeyError:
        raise UnknownFunction(f"unknown regression function {s_id!r}") from None


def eval_regression_function(s_id: str, x):
    """Evaluate the regression function ``s_id`` at ``x`` (scalar or array)."""
    out = regression_function(s_id)(x)
    return float(out) if np.ndim(out) == 0 else out


def noise_function(sigma_id: str, level: float = 1.0) -> PiecewiseFunction:
    """Noise standard deviation ``x -> sigma(x)``.

    ``const`` is the constant ``level``, ``linear`` is ``sigma(x) = x`` and
    ``step`` is the indicator of ``x >= 1/2``.
    """
    if sigma_id == "const":
        return PiecewiseFunction(f"const({level:g})", lambda x: np.full_like(x, level))
    if sigma_id == "linear":
        return PiecewiseFunction("linear", lambda x: x.copy())
    if sigma_id == "step":
        return PiecewiseFunction("step", lambda x: (x >= 0.5).astype(float), jumps=(0.5,))
    raise UnknownFunction(f"unknown noise function {sigma_id!r}")
