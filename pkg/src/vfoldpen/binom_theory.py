"""Exact finite-sample constants: inverse binomial moments, V-fold weight
moments, and the deterministic constants of the suboptimality analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateCell, DomainError

# Constants of the two-sided bound on E[Z]E[1/Z | Z > 0] for binomial Z.
KAPPA_3 = 5.1
KAPPA_4 = 3.2


@dataclass(frozen=True)
class BinomialSpec:
    n: int
    p: float

    def __post_init__(self):
        if self.n < 1 or not 0.0 < self.p <= 1.0:
            raise DomainError(f"need n >= 1 and 0 < p <= 1, got n={self.n}, p={self.p}")


@dataclass(frozen=True)
class VFoldCellSpec:
    """A cell holding ``count = a*V + b`` points, ``0 <= b < V``."""

    count: int
    V: int

    def __post_init__(self):
        if self.count < 2 or self.V < 2:
            raise DomainError(f"need count >= 2 and V >= 2, got count={self.count}, V={self.V}")

    @property
    def a(self) -> int:
        return self.count // self.V

    @property
    def b(self) -> int:
        return self.count % self.V


def _binom_logpmf(n: int, p: float) -> np.ndarray:
    k = np.arange(1, n + 1, dtype=float)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + k * math.log(p) + (n - k) * math.log1p(-p)


def einvz(n: int, p: float) -> float:
    """``E[Z] * E[Z^{-1} 1_{Z>0}]`` for ``Z ~ B(n, p)``, by exact summation."""
    BinomialSpec(n, p)
    if p == 1.0:
        return 1.0
    terms = np.exp(_binom_logpmf(n, p)) / np.arange(1, n + 1)
    return n * p * math.fsum(terms.tolist())


def prob_positive(n: int, p: float) -> float:
    """``P(Z > 0)`` for ``Z ~ B(n, p)``."""
    return 1.0 if p == 1.0 else -math.expm1(n * math.log1p(-p))


def einv(n: int, p: float) -> float:
    """``E[Z] * E[Z^{-1} | Z > 0]`` for ``Z ~ B(n, p)``."""
    return einvz(n, p) / prob_positive(n, p)


def einv_bounds(n: int, p: float) -> tuple[float, float]:
    """Lower and upper bounds on :func:`einv`, valid when ``n * p >= 1``."""
    np_ = n * p
    return -math.expm1(-np_), min(KAPPA_4, 1.0 + KAPPA_3 * np_**-0.25)


def r1_r2_vfold(count: int, V: int, exact: bool = False):
    """Moments ``(R1, R2)`` of the V-fold subsampling weights inside one cell.

    The weights are those of a V-fold split that is balanced within the cell
    and symmetrized over all such splits. ``R2 = 1/(V-1)`` always; ``R1``
    adds a correction when ``V`` does not divide ``count``. With
    ``exact=True`` the values are returned as :class:`fractions.Fraction`.

    Raises
    ------
    DegenerateCell
        If ``count = 1 (mod V)`` with ``count < V``, i.e. a single point
        whose removal would empty the cell.
    """
    spec = VFoldCellSpec(count, V)
    a, b = spec.a, spec.b
    r2 = Fraction(1, V - 1)
    if b == 0:
        r1 = r2
    else:
        low = a * (V - 1) + b - 1
        if low < 1:
            raise DegenerateCell(f"count={count}, V={V}: a block can hold the only point of the cell")
        high = a * (V - 1) + b
        r1 = Fraction(1, V - 1) - Fraction(b, (V - 1) * high) + Fraction((a * V + b) * b, V * low * high)
    if exact:
        return r1, r2
    return float(r1), float(r2)


def r1_r2_arrays(counts: np.ndarray, V: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized float version of :func:`r1_r2_vfold` over cell counts."""
    counts = np.asarray(counts, dtype=np.int64)
    a, b = np.divmod(counts, V)
    high = (a * (V - 1) + b).astype(float)
    low = high - 1.0
    if np.any((b > 0) & (low < 1)) or np.any(counts < 2):
        raise DegenerateCell(f"some cell count is too small for V={V}")
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = np.where(b > 0, -b / ((V - 1) * high) + counts * b / (V * low * high), 0.0)
    r2 = np.full(counts.shape, 1.0 / (V - 1))
    return r2 + corr, r2


def delta_penV(count: int, V: int, exact: bool = False):
    """Finite-sample excess of ``(V-1)(R1 + R2)`` over 2 for a cell."""
    spec = VFoldCellSpec(count, V)
    if count < 3:
        raise DomainError("delta_penV needs count >= 3")
    a, b = spec.a, spec.b
    d = Fraction(b, count - a) * (Fraction(V - 1, V) * Fraction(count, count - a - 1) - 1)
    return d if exact else float(d)


def kappa_V(V: float) -> float:
    """Asymptotic excess-loss inflation of V-fold cross-validation in the linear case."""
    if V < 2:
        raise DomainError("V must be >= 2")
    return 2 ** (2 / 3) / 3 * (1 - ((V - 1) / V) ** (1 / 3)) ** 2


def K_C(C: float) -> float:
    """Loss-ratio inflation constant for a penalty overestimated by factor ``C``."""
    if C <= 0:
        raise DomainError("C must be > 0")
    return 2 ** (2 / 3) / 3 * (C ** (-1 / 3) - 1) ** 2


def f_lemma(x: float) -> float:
    """``2^{-2/3} (1+x)^{-2} + 2^{1/3} (1+x)``, the normalized bias-variance curve."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= -1):
        raise DomainError("f_lemma is defined for x > -1")
    out = 2 ** (-2 / 3) * (1 + x) ** -2 + 2 ** (1 / 3) * (1 + x)
    return float(out) if out.ndim == 0 else out


def f_lemma_lower_bound(x):
    """Quadratic lower bound ``3 * 2^{-2/3} + 3 * 2^{-14/3} * min(x^2, 1)``."""
    x = np.asarray(x, dtype=float)
    out = 3 * 2 ** (-2 / 3) + 3 * 2 ** (-14 / 3) * np.minimum(x * x, 1.0)
    return float(out) if out.ndim == 0 else out


def deterministic_crit_analysis(a: float, b: float, C: float, n: float, dims) -> tuple[float, int, int]:
    """Compare the minimizers of ``a/D^2 + bD/n`` and ``a/D^2 + CbD/n``.

    Returns
    -------
    ratio : float
        ``crit1(dim2) / crit1(dim1)``, the loss inflation caused by
        selecting with the inflated criterion.
    dim1, dim2 : int
        Minimizers of the true and inflated criteria over ``dims``; ties go
        to the smallest dimension.
    """
    if a <= 0 or b <= 0 or C < 1:
        raise DomainError("need a, b > 0 and C >= 1")
    d = np.asarray(dims, dtype=float)
    if d.size == 0:
        raise DomainError("dims must be nonempty")
    order = np.argsort(d, kind="stable")
    d = d[order]
    crit1 = a / d**2 + b * d / n
    crit2 = a / d**2 + C * b * d / n
    i1 = int(np.argmin(crit1))
    i2 = int(np.argmin(crit2))
    return float(crit1[i2] / crit1[i1]), int(d[i1]), int(d[i2])


def deterministic_ratio_limit(C: float) -> float:
    """Large-``n`` limit of the ratio returned by :func:`deterministic_crit_analysis`."""
    return f_lemma(C ** (-1 / 3) - 1) / f_lemma(0.0)
