"""Model-selection criteria and the final argmin rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from . import binom_theory
from .errors import CellTooSmall, InvalidV, NoAdmissibleModel, OddSampleSize, UndefinedTrainingFit
from .histogram_core import (
    FittedHistogram,
    HistogramModel,
    cell_noise,
    empirical_risk,
    excess_loss,
    fit,
)
from .resampling import FoldAssignment, fold_sums, regular_folds
from .scenarios import DataSet, RegressionScenario

OVERPEN_PLUS = 1.25


class Method(str, Enum):
    VFCV = "VFCV"
    CORRECTED_VFCV = "CorrectedVFCV"
    PEN_VF_GENERAL = "PenVFGeneral"
    PEN_VF_CLOSED = "PenVFClosed"
    MALLOWS = "Mallows"
    MALLOWS_STAR = "MallowsStar"
    IDEAL_EXPECTED_PENALTY = "IdealExpectedPenalty"
    # Picks the model with the smallest true loss; only for tests and sanity runs.
    PATH_ORACLE = "PathOracle"


_FOLD_METHODS = {Method.VFCV, Method.CORRECTED_VFCV, Method.PEN_VF_GENERAL}
_V_METHODS = _FOLD_METHODS | {Method.PEN_VF_CLOSED}
_ORACLE_METHODS = {Method.MALLOWS_STAR, Method.IDEAL_EXPECTED_PENALTY, Method.PATH_ORACLE}


@dataclass(frozen=True)
class SelectorSpec:
    """One model-selection procedure.

    ``V`` is an int or ``"n"`` (leave-one-out). ``C`` defaults to ``V - 1``
    for the V-fold penalties. The criterion of a penalty method is
    ``risk + overpen * pen``.
    """

    method: Method
    V: int | str | None = None
    C: float | None = None
    overpen: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.method in _V_METHODS:
            if self.V is None or (self.V != "n" and (not isinstance(self.V, (int, np.integer)) or self.V < 2)):
                raise InvalidV(f"{self.method.value} needs V >= 2 or 'n', got {self.V!r}")
        if self.overpen < 1:
            raise ValueError("overpen must be >= 1")
        if self.C is not None and self.method in (Method.PEN_VF_GENERAL, Method.PEN_VF_CLOSED):
            if self.V != "n" and self.C < self.V - 1:
                raise ValueError(f"C must be >= V - 1 = {self.V - 1}, got {self.C}")

    def resolve_V(self, n: int) -> int:
        return n if self.V == "n" else int(self.V)

    def resolve_C(self, n: int) -> float:
        if self.C is not None:
            if self.C < self.resolve_V(n) - 1:
                raise ValueError(f"C must be >= V - 1 = {self.resolve_V(n) - 1}, got {self.C}")
            return float(self.C)
        return float(self.resolve_V(n) - 1)

    @property
    def needs_oracle(self) -> bool:
        return self.method in _ORACLE_METHODS

    @property
    def label(self) -> str:
        plus = "+" if self.overpen == OVERPEN_PLUS else ("" if self.overpen == 1 else f"x{self.overpen:g}")
        c = "" if self.C is None else f"@C={self.C:g}"
        v = "Loo" if self.V == "n" else f"{self.V}-F"
        m = self.method
        if m is Method.VFCV:
            base = "LOO" if self.V == "n" else f"{self.V}-FCV"
        elif m is Method.CORRECTED_VFCV:
            base = "corrLOO" if self.V == "n" else f"corr{self.V}-FCV"
        elif m is Method.PEN_VF_GENERAL:
            base = f"pen{v}"
        elif m is Method.PEN_VF_CLOSED:
            base = f"pen{v}(closed)" if self.V != "n" else "penLoo"
        elif m is Method.MALLOWS:
            base = "Mal"
        elif m is Method.MALLOWS_STAR:
            base = "Mal*"
        elif m is Method.IDEAL_EXPECTED_PENALTY:
            base = "E[penid]"
        else:
            base = "path-oracle"
        return base + plus + c


@dataclass
class SelectionOutcome:
    chosen: int
    crit: dict[int, float]
    dropped: list[tuple[int, str]] = field(default_factory=list)


# --- criteria ----------------------------------------------------------------


def _fold_sums(data: DataSet, model: HistogramModel | FittedHistogram, folds: FoldAssignment):
    fitted = model if isinstance(model, FittedHistogram) else fit(data, model)
    if folds.n != data.n:
        raise ValueError("fold assignment and data have different sizes")
    return fitted, fold_sums(fitted, data.ys, folds)


def crit_vfcv(data: DataSet, model, folds: FoldAssignment) -> float:
    """Mean over blocks of the held-out risk of the fit trained without the block."""
    _, fs = _fold_sums(data, model, folds)
    if np.any(fs.sizes == 0):
        raise InvalidV("every block must be nonempty for V-fold cross-validation")
    return float(np.mean(fs.val / fs.sizes))


def crit_corrected_vfcv(data: DataSet, model, folds: FoldAssignment) -> float:
    """Cross-validation criterion with the training-size bias correction."""
    fitted, fs = _fold_sums(data, model, folds)
    if np.any(fs.sizes == 0):
        raise InvalidV("every block must be nonempty for V-fold cross-validation")
    n = data.n
    return float(np.mean(fs.val / fs.sizes) + fitted.css.sum() / n - np.mean(fs.full) / n)


def pen_vf_general(data: DataSet, model, folds: FoldAssignment, C: float) -> float:
    """V-fold resampling penalty computed from the V training fits of a fixed partition.

    For block ``j`` the resample weights are ``V/(V-1)`` outside the block
    and 0 inside. The penalty is ``C`` times the average over ``j`` of
    ``(P_n - P_n^W) gamma(s_hat^W)``, split cell by cell into
    ``phi_hat (beta_hat^W - beta_hat)^2``, averaged over the blocks that
    leave the cell nonempty, plus ``phi_hat^W (beta_hat^W - beta_hat)^2``,
    which vanishes when the cell is emptied. If no block empties a cell this
    is exactly ``(C/V) sum_j [P_n gamma(s_hat^(-j)) - P_n^W gamma(s_hat^(-j))]``,
    and ``P_n^W`` is the training empirical measure when all blocks have
    size ``n / V``.
    """
    fitted = model if isinstance(model, FittedHistogram) else fit(data, model)
    if folds.n != data.n:
        raise ValueError("fold assignment and data have different sizes")
    fs = fold_sums(fitted, data.ys, folds, allow_empty=True)
    n, V, d = data.n, folds.V, fitted.model.dim
    phi = fitted.counts / n
    ok = fs.pair_train_count > 0
    cell = fs.pair_cell[ok]
    shift = fs.pair_shift_sq[ok]
    weight = V / (V - 1) * fs.pair_train_count[ok] / fitted.counts[cell]
    n_valid = V - np.bincount(fs.pair_cell[~ok], minlength=d)
    p1 = phi * np.bincount(cell, weights=shift, minlength=d) / n_valid
    p2 = phi * np.bincount(cell, weights=weight * shift, minlength=d) / V
    return float(C * np.sum(p1 + p2))


def pen_vf_refit(data: DataSet, model, folds: FoldAssignment, C: float) -> float:
    """``(C/V) sum_j [P_n gamma(s_hat^(-j)) - P_n^W gamma(s_hat^(-j))]`` from refits.

    Undefined (raises :class:`UndefinedTrainingFit`) when a block holds a
    whole cell; otherwise equal to :func:`pen_vf_general`.
    """
    _, fs = _fold_sums(data, model, folds)
    n, V = data.n, folds.V
    gaps = fs.full / n - V * fs.train / ((V - 1) * n)
    return float(C * np.mean(gaps))


def pen_vf_closed(fitted: FittedHistogram, V: int, C: float) -> float:
    """Exact expectation of the V-fold penalty over within-cell balanced splits.

    Depends on the data only through cell counts and centered sums of
    squares ``count * sum y^2 - (sum y)^2 = count * css``.
    """
    counts = fitted.counts
    if counts.min() < 2:
        raise CellTooSmall("every cell needs at least 2 observations")
    r1, r2 = binom_theory.r1_r2_arrays(counts, V)
    n = fitted.n
    return float(C * np.sum((r1 + r2) * fitted.css / ((counts - 1) * n)))


def mallows_pen(model: HistogramModel, n: int, sigma_hat_sq: float) -> float:
    if sigma_hat_sq < 0:
        raise ValueError("sigma_hat_sq must be >= 0")
    return 2.0 * sigma_hat_sq * model.dim / n


def variance_estimator(data: DataSet) -> float:
    """Difference-based noise variance: ``(1/n) sum over sorted pairs (y_a - y_b)^2``."""
    n = data.n
    if n % 2 or n < 4:
        raise OddSampleSize(f"need an even sample size >= 4, got {n}")
    ys = data.ys[np.argsort(data.xs, kind="stable")]
    diff = ys[0::2] - ys[1::2]
    return float(np.sum(diff * diff) / n)


def mallows_star_pen(scenario: RegressionScenario, model: HistogramModel, n: int) -> float:
    return 2.0 * scenario.mean_noise_variance() * model.dim / n


@lru_cache(maxsize=65536)
def _ideal_delta_scalar(n: int, p: float) -> float:
    if p >= 1.0:
        return 0.0
    return binom_theory.einvz(n, p) - 1.0 + n * p * math.exp(n * math.log1p(-p))


def ideal_delta(n: int, p) -> np.ndarray:
    """``einvz(B(n, p)) - 1 + n p (1-p)^n`` cell by cell."""
    return np.array([_ideal_delta_scalar(n, float(pk)) for pk in np.atleast_1d(p)])


@lru_cache(maxsize=4096)
def _ideal_delta_partition(n: int, breakpoints: tuple[float, ...]) -> np.ndarray:
    return ideal_delta(n, np.diff(breakpoints))


def ideal_expected_pen(scenario: RegressionScenario, model: HistogramModel, n: int) -> float:
    """Expectation of the ideal penalty ``(1/n) sum (2 + delta_{n,p}) sigma_l^2``."""
    part = model.partition
    delta = _ideal_delta_partition(n, part.breakpoints)
    return float(np.sum((2.0 + delta) * cell_noise(scenario, part)) / n)


# --- selection ---------------------------------------------------------------


def select(crits: Sequence[float | None] | Mapping[int, float], dims: Sequence[int] | Mapping[int, int]) -> SelectionOutcome:
    """Argmin of the defined criterion values; ties go to the smallest dimension, then id.

    ``crits`` is either a sequence indexed by model id (``None`` or NaN for
    undefined entries) or a mapping from model id to value.
    """
    if isinstance(crits, Mapping):
        items = dict(crits)
    else:
        items = {i: c for i, c in enumerate(crits)}
    defined = {i: float(c) for i, c in items.items() if c is not None and not math.isnan(c)}
    if not defined:
        raise NoAdmissibleModel("no model has a defined criterion value")
    chosen = min(defined, key=lambda i: (defined[i], dims[i], i))
    dropped = [(i, "undefined criterion") for i in items if i not in defined]
    return SelectionOutcome(chosen, defined, dropped)


def _penalty_fn(spec: SelectorSpec, data: DataSet, scenario, folds) -> Callable[[FittedHistogram], float]:
    n = data.n
    m = spec.method
    if m is Method.VFCV:
        return lambda f: crit_vfcv(data, f, folds) - empirical_risk(f)
    if m is Method.CORRECTED_VFCV:
        return lambda f: crit_corrected_vfcv(data, f, folds) - empirical_risk(f)
    if m is Method.PEN_VF_GENERAL:
        C = spec.resolve_C(n)
        return lambda f: pen_vf_general(data, f, folds, C)
    if m is Method.PEN_VF_CLOSED:
        V, C = spec.resolve_V(n), spec.resolve_C(n)
        return lambda f: pen_vf_closed(f, V, C)
    if m is Method.MALLOWS:
        s2 = variance_estimator(data)
        return lambda f: mallows_pen(f.model, n, s2)
    if m is Method.MALLOWS_STAR:
        return lambda f: mallows_star_pen(scenario, f.model, n)
    if m is Method.IDEAL_EXPECTED_PENALTY:
        return lambda f: ideal_expected_pen(scenario, f.model, n)
    raise ValueError(f"no penalty for {m}")


def run_selector(
    spec: SelectorSpec,
    data: DataSet,
    models: Sequence[HistogramModel],
    scenario: RegressionScenario | None = None,
    rng: np.random.Generator | None = None,
    fits: Mapping[int, FittedHistogram] | None = None,
    folds: FoldAssignment | None = None,
) -> SelectionOutcome:
    """Select a model among ``models`` (already filtered to the admissible set).

    Fold-based methods draw one regular fold assignment from ``rng`` (or use
    ``folds``) and share it across all models. For the cross-validation
    criteria, models whose training folds empty a cell are dropped and
    listed in the outcome; the V-fold penalty handles such cells itself.
    """
    if spec.needs_oracle and scenario is None:
        raise ValueError(f"{spec.label} needs the scenario oracle")
    if fits is None:
        fits = {m.id: fit(data, m) for m in models}
    dims = {m.id: m.dim for m in models}
    if spec.method is Method.PATH_ORACLE:
        return select({m.id: excess_loss(fits[m.id], scenario) for m in models}, dims)
    if spec.method in _FOLD_METHODS and folds is None:
        if rng is None:
            raise ValueError(f"{spec.label} needs a random stream for its folds")
        folds = regular_folds(data.n, spec.resolve_V(data.n), rng)
    penalty = _penalty_fn(spec, data, scenario, folds)
    crits: dict[int, float] = {}
    dropped: list[tuple[int, str]] = []
    for m in models:
        f = fits[m.id]
        try:
            crits[m.id] = empirical_risk(f) + spec.overpen * penalty(f)
        except UndefinedTrainingFit as exc:
            dropped.append((m.id, str(exc)))
    if not crits:
        raise NoAdmissibleModel(f"{spec.label}: every model was dropped")
    out = select(crits, dims)
    out.dropped = dropped
    return out
