"""V-fold partitions of the sample and refits on training folds."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptyCell, InvalidV, UndefinedTrainingFit
from .histogram_core import FittedHistogram, HistogramModel, fit_cells
from .scenarios import DataSet


class FoldKind(str, Enum):
    REGULAR = "Regular"
    STRATIFIED = "Stratified"


@dataclass(frozen=True)
class FoldAssignment:
    block_of: np.ndarray
    V: int
    kind: FoldKind = FoldKind.REGULAR

    def __post_init__(self):
        block_of = np.asarray(self.block_of, dtype=np.intp)
        if block_of.ndim != 1 or (block_of.size and (block_of.min() < 0 or block_of.max() >= self.V)):
            raise ValueError("block indices must lie in [0, V)")
        block_of.flags.writeable = False
        object.__setattr__(self, "block_of", block_of)

    @property
    def n(self) -> int:
        return len(self.block_of)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.block_of, minlength=self.V)

    def block(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.block_of == j)


def _check_v(n: int, V: int):
    if not 2 <= V <= n:
        raise InvalidV(f"V must lie in [2, n={n}], got {V}")


def regular_folds(n: int, V: int, rng: np.random.Generator) -> FoldAssignment:
    """Uniformly random partition into V blocks whose sizes differ by at most one."""
    _check_v(n, V)
    labels = rng.permutation(V)[np.arange(n) % V]
    return FoldAssignment(rng.permutation(labels), V, FoldKind.REGULAR)


def stratified_folds(data: DataSet, model: HistogramModel, V: int, rng: np.random.Generator) -> FoldAssignment:
    """Partition balanced within every cell of ``model``.

    Inside each cell the indices are shuffled and dealt round-robin to the
    blocks taken in a random order, so each block receives
    ``floor(count/V)`` or ``ceil(count/V)`` points of the cell.
    """
    _check_v(data.n, V)
    cell_of = model.partition.cell_index(data.xs)
    counts = np.bincount(cell_of, minlength=model.dim)
    if counts.min() < 1:
        raise EmptyCell(f"model {model.label or model.id} has an empty cell")
    block_of = np.empty(data.n, dtype=np.intp)
    order = np.argsort(cell_of, kind="stable")
    start = 0
    for count in counts:
        members = rng.permutation(order[start : start + count])
        block_of[members] = rng.permutation(V)[np.arange(count) % V]
        start += count
    return FoldAssignment(block_of, V, FoldKind.STRATIFIED)


def train_fit(data: DataSet, model: HistogramModel, folds: FoldAssignment, j: int) -> FittedHistogram:
    """Fit ``model`` on every observation outside block ``j``."""
    if not 0 <= j < folds.V:
        raise IndexError(f"block index {j} out of range for V={folds.V}")
    keep = folds.block_of != j
    fitted = fit_cells(model.partition.cell_index(data.xs[keep]), data.ys[keep], model)
    if fitted.has_empty_cell:
        raise UndefinedTrainingFit(f"removing block {j} empties a cell of model {model.label or model.id}")
    return fitted


@dataclass(frozen=True)
class FoldSums:
    """Per-block squared-error sums for all V training fits of one model.

    ``val[j]`` is the validation-block residual sum of the fit trained
    without block ``j``; ``full[j]`` the residual sum of that fit over the
    whole sample; ``train[j] = full[j] - val[j]``. Both are NaN for blocks
    whose removal empties a cell.

    The ``pair_*`` arrays describe every occupied ``(block, cell)`` pair:
    its block, cell, number of training points left in the cell and the
    squared shift ``(training mean - full mean)^2`` of that cell.
    """

    sizes: np.ndarray
    val: np.ndarray
    full: np.ndarray
    pair_block: np.ndarray
    pair_cell: np.ndarray
    pair_train_count: np.ndarray
    pair_shift_sq: np.ndarray

    @property
    def train(self) -> np.ndarray:
        return self.full - self.val

    @property
    def defined(self) -> bool:
        return bool(np.all(self.pair_train_count > 0))


def fold_sums(
    fitted: FittedHistogram, ys: np.ndarray, folds: FoldAssignment, allow_empty: bool = False
) -> FoldSums:
    """Compute :class:`FoldSums` without refitting block by block.

    A training mean differs from the full-sample mean only in the cells the
    held-out block touches, so all work is done over the occupied
    ``(block, cell)`` pairs.

    Raises
    ------
    UndefinedTrainingFit
        If some block holds every point of a cell, unless ``allow_empty``.
    """
    fitted.require_nonempty()
    V = folds.V
    d = fitted.model.dim
    cell_of = fitted.cell_of
    key = folds.block_of * d + cell_of
    pairs, inv = np.unique(key, return_inverse=True)
    pair_count = np.bincount(inv)
    pair_sum = np.bincount(inv, weights=ys)
    pair_block, pair_cell = np.divmod(pairs, d)
    train_count = fitted.counts[pair_cell] - pair_count
    emptied = train_count == 0
    if emptied.any() and not allow_empty:
        j = int(pair_block[np.argmax(emptied)])
        raise UndefinedTrainingFit(
            f"removing block {j} empties a cell of model {fitted.model.label or fitted.model.id}"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        train_mean = (fitted.sums[pair_cell] - pair_sum) / train_count
    train_mean[emptied] = np.nan
    resid = ys - train_mean[inv]
    val = np.bincount(folds.block_of, weights=resid * resid, minlength=V)
    shift_sq = (fitted.means[pair_cell] - train_mean) ** 2
    full = fitted.css.sum() + np.bincount(pair_block, weights=fitted.counts[pair_cell] * shift_sq, minlength=V)
    return FoldSums(folds.sizes, val, full, pair_block, pair_cell, train_count, shift_sq)
