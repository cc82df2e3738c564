"""Histogram models on [0, 1), least-squares fits and exact oracle losses."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import EmptyAdmissibleSet, InvalidSize, UndefinedEstimator
from .quadrature import integrate_cells
from .scenarios import CollectionKind, DataSet, RegressionScenario

ADMISSIBILITY_THRESHOLD = 3


@dataclass(frozen=True)
class Partition1D:
    """Cells ``[b_k, b_{k+1})`` of [0, 1) given by increasing breakpoints."""

    breakpoints: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if len(bp) < 2 or bp[0] != 0.0 or bp[-1] != 1.0:
            raise ValueError("breakpoints must start at 0, end at 1 and define at least one cell")
        if any(b1 <= b0 for b0, b1 in zip(bp[:-1], bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)

    @classmethod
    def regular(cls, d: int) -> "Partition1D":
        return cls(tuple(np.linspace(0.0, 1.0, d + 1)))

    @classmethod
    def two_bin_sizes(cls, d_left: int, d_right: int) -> "Partition1D":
        """``d_left`` regular cells on [0, 1/2) and ``d_right`` on [1/2, 1)."""
        left = np.linspace(0.0, 0.5, d_left + 1)
        right = np.linspace(0.5, 1.0, d_right + 1)
        return cls(tuple(left) + tuple(right[1:]))

    @property
    def dim(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.breakpoints[:-1])

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.breakpoints[1:])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def cell_index(self, xs) -> np.ndarray:
        """Index of the cell containing each point of ``xs``."""
        idx = np.searchsorted(self.breakpoints, xs, side="right") - 1
        return np.clip(idx, 0, self.dim - 1)


@dataclass(frozen=True)
class HistogramModel:
    id: int
    partition: Partition1D
    label: str = ""

    @property
    def dim(self) -> int:
        return self.partition.dim


@dataclass(frozen=True)
class ModelCollection:
    kind: CollectionKind
    models: tuple[HistogramModel, ...]
    n: int

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    @property
    def dims(self) -> list[int]:
        return [m.dim for m in self.models]


def _log2_exact(n: int) -> int:
    k = n.bit_length() - 1
    if n != 1 << k:
        raise InvalidSize(f"dyadic collections need n a power of 2, got {n}")
    return k


def build_collection(kind: CollectionKind | str, n: int) -> ModelCollection:
    """Build the model collection of the given kind for sample size ``n``.

    Regular: ``D = 1..floor(n / ln n)``. TwoBinSizes: the constant model plus
    ``(D1, D2)`` with ``1 <= D1, D2 <= floor(n / (2 ln n))``. Dyadic: ``2^k``
    for ``0 <= k <= log2(n) - 1``. DyadicTwoBinSizes: the constant model plus
    ``(2^k1, 2^k2)`` with ``0 <= k1, k2 <= log2(n) - 2``.
    """
    kind = CollectionKind(kind)
    if n < 8:
        raise InvalidSize(f"collections need n >= 8, got {n}")
    parts: list[tuple[Partition1D, str]] = []
    if kind is CollectionKind.REGULAR:
        dmax = math.floor(n / math.log(n))
        parts = [(Partition1D.regular(d), f"D={d}") for d in range(1, dmax + 1)]
    elif kind is CollectionKind.TWO_BIN_SIZES:
        dmax = math.floor(n / (2 * math.log(n)))
        parts = [(Partition1D.regular(1), "D=1")]
        parts += [
            (Partition1D.two_bin_sizes(d1, d2), f"({d1},{d2})")
            for d1 in range(1, dmax + 1)
            for d2 in range(1, dmax + 1)
        ]
    elif kind is CollectionKind.DYADIC:
        k = _log2_exact(n)
        parts = [(Partition1D.regular(2**j), f"D={2**j}") for j in range(k)]
    else:
        k = _log2_exact(n)
        parts = [(Partition1D.regular(1), "D=1")]
        parts += [
            (Partition1D.two_bin_sizes(2**k1, 2**k2), f"({2**k1},{2**k2})")
            for k1 in range(k - 1)
            for k2 in range(k - 1)
        ]
    models = tuple(HistogramModel(i, p, label) for i, (p, label) in enumerate(parts))
    return ModelCollection(kind, models, n)


@dataclass(frozen=True)
class FittedHistogram:
    """Per-cell sufficient statistics of a least-squares histogram fit.

    ``means`` is NaN on empty cells; ``css`` holds the centered sums of
    squares ``sum (y - mean)^2`` computed directly from the residuals.
    """

    model: HistogramModel
    counts: np.ndarray
    sums: np.ndarray
    sum_sq: np.ndarray
    means: np.ndarray
    css: np.ndarray
    cell_of: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def empty(self) -> np.ndarray:
        return self.counts == 0

    @property
    def has_empty_cell(self) -> bool:
        return bool(self.empty.any())

    def require_nonempty(self):
        if self.has_empty_cell:
            raise UndefinedEstimator(
                f"model {self.model.label or self.model.id} has {int(self.empty.sum())} empty cell(s)"
            )


def fit_cells(cell_of: np.ndarray, ys: np.ndarray, model: HistogramModel) -> FittedHistogram:
    d = model.dim
    counts = np.bincount(cell_of, minlength=d)
    sums = np.bincount(cell_of, weights=ys, minlength=d)
    sum_sq = np.bincount(cell_of, weights=ys * ys, minlength=d)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    resid = ys - means[cell_of]
    css = np.bincount(cell_of, weights=resid * resid, minlength=d)
    return FittedHistogram(model, counts, sums, sum_sq, means, css, cell_of)


def fit(data: DataSet, model: HistogramModel) -> FittedHistogram:
    """Least-squares histogram fit of ``data`` on ``model``."""
    return fit_cells(model.partition.cell_index(data.xs), data.ys, model)


def empirical_risk(fitted: FittedHistogram, data: DataSet | None = None) -> float:
    """``(1/n) sum_i (s_hat(x_i) - y_i)^2``.

    ``data`` must be the sample the fit was computed on; the per-cell
    statistics already determine the value, so it is optional.
    """
    fitted.require_nonempty()
    n = fitted.n if data is None else data.n
    return float(fitted.css.sum() / n)


# --- oracle quantities ------------------------------------------------------


@lru_cache(maxsize=4096)
def _cell_means(s_id: str, partition: Partition1D) -> np.ndarray:
    from .functions import regression_function

    s = regression_function(s_id)
    integ = integrate_cells(lambda x, _: s(x), partition.lo, partition.hi, s.jumps, s.singular_at)
    return integ / partition.lengths


@lru_cache(maxsize=4096)
def _cell_bias(s_id: str, partition: Partition1D) -> np.ndarray:
    from .functions import regression_function

    s = regression_function(s_id)
    beta = _cell_means(s_id, partition)
    return integrate_cells(
        lambda x, owner: (s(x) - beta[owner]) ** 2, partition.lo, partition.hi, s.jumps, s.singular_at
    )


@lru_cache(maxsize=4096)
def _cell_noise(sigma_id: str, level: float, partition: Partition1D) -> np.ndarray:
    from .functions import noise_function

    sig = noise_function(sigma_id, level)
    integ = integrate_cells(lambda x, _: sig(x) ** 2, partition.lo, partition.hi, sig.jumps)
    return integ / partition.lengths


def cell_means(scenario: RegressionScenario, partition: Partition1D) -> np.ndarray:
    """True cell means ``beta_lambda`` of every cell of ``partition``."""
    return _cell_means(scenario.s_id, partition)


def cell_noise(scenario: RegressionScenario, partition: Partition1D) -> np.ndarray:
    """Conditional noise variances ``sigma_lambda^2`` of every cell."""
    return _cell_noise(scenario.sigma_id, float(scenario.sigma_level), partition)


def _single_cell(cell: Sequence[float]) -> Partition1D:
    a, b = float(cell[0]), float(cell[1])
    if not 0.0 <= a < b <= 1.0:
        raise ValueError(f"cell must be a positive-length subinterval of [0, 1], got {cell}")
    return Partition1D(tuple(sorted({0.0, a, b, 1.0})))


def _cell_position(part: Partition1D, a: float) -> int:
    return part.breakpoints.index(float(a))


def true_cell_mean(scenario: RegressionScenario, cell: Sequence[float]) -> float:
    """``(1/|I|) * integral of s over I`` for the interval ``cell = (a, b)``."""
    part = _single_cell(cell)
    return float(cell_means(scenario, part)[_cell_position(part, cell[0])])


def sigma_lambda_sq(scenario: RegressionScenario, cell: Sequence[float]) -> float:
    """Mean of ``sigma(x)^2`` over ``cell`` (the noise has unit conditional variance)."""
    part = _single_cell(cell)
    return float(cell_noise(scenario, part)[_cell_position(part, cell[0])])


def bias(scenario: RegressionScenario, model: HistogramModel) -> float:
    """Approximation error ``integral (s - s_m)^2`` of the model."""
    return float(_cell_bias(scenario.s_id, model.partition).sum())


def excess_loss_of_means(means: np.ndarray, scenario: RegressionScenario, model: HistogramModel) -> float:
    """Excess loss of the histogram taking value ``means[k]`` on cell ``k``."""
    beta = cell_means(scenario, model.partition)
    return float(np.sum(model.partition.lengths * (np.asarray(means) - beta) ** 2) + bias(scenario, model))


def excess_loss(fitted: FittedHistogram, scenario: RegressionScenario) -> float:
    """True excess loss ``l(s, s_hat_m) = sum p_l (beta_hat - beta)^2 + bias``."""
    fitted.require_nonempty()
    return excess_loss_of_means(fitted.means, scenario, fitted.model)


def p2_diagnostic(fitted: FittedHistogram, scenario: RegressionScenario) -> float:
    """``sum_l phi_hat_l (beta_hat_l - beta_l)^2``; needs the true cell means."""
    fitted.require_nonempty()
    beta = cell_means(scenario, fitted.model.partition)
    return float(np.sum(fitted.counts / fitted.n * (fitted.means - beta) ** 2))


def filter_admissible(
    data: DataSet, collection: ModelCollection | Sequence[HistogramModel], threshold: int = ADMISSIBILITY_THRESHOLD
) -> list[HistogramModel]:
    """Models whose every cell holds at least ``threshold`` observations."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    kept = []
    for model in collection:
        counts = np.bincount(model.partition.cell_index(data.xs), minlength=model.dim)
        if counts.min() >= threshold:
            kept.append(model)
    if not kept:
        raise EmptyAdmissibleSet(f"no model has all cell counts >= {threshold} (n={data.n})")
    return kept
