"""Vectorized adaptive Gauss-Legendre quadrature over many cells at once.

Cells are split at every known discontinuity of the integrand before
integration; pieces are then bisected until a 16-node rule on the piece and
on its two halves agree.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureFailure

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(16)
# Depth of the initial geometric refinement towards a singular point.
_SINGULAR_LEVELS = 24


def _gl(f, a, b, owner, origin):
    # Pieces with a finite origin are integrated in u, where x = origin + u^2.
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    u = mid[:, None] + half[:, None] * _NODES[None, :]
    sub = ~np.isnan(origin)
    x = np.where(sub[:, None], np.nan_to_num(origin)[:, None] + u * u, u)
    fx = f(x, np.broadcast_to(owner[:, None], x.shape))
    fx = np.where(sub[:, None], 2.0 * u * fx, fx)
    return half * (fx @ _WEIGHTS), half * (np.abs(fx) @ _WEIGHTS)


def _presplit(lo, hi, jumps, singular_at):
    a, b, owner, origin = [], [], [], []
    for k, (l, h) in enumerate(zip(lo, hi)):
        cuts = [l] + sorted(p for p in jumps if l < p < h) + [h]
        for c0, c1 in zip(cuts[:-1], cuts[1:]):
            if singular_at is not None and c0 <= singular_at < c1:
                if singular_at != c0:
                    raise ValueError("singular point must sit at a piece boundary")
                width = c1 - c0
                pts = [c0 + width * 2.0**-j for j in range(_SINGULAR_LEVELS, 0, -1)] + [c1]
                # innermost piece in the u variable, x = c0 + u^2
                a.append(0.0)
                b.append(np.sqrt(pts[0] - c0))
                owner.append(k)
                origin.append(c0)
                a.extend(pts[:-1])
                b.extend(pts[1:])
                owner.extend([k] * (len(pts) - 1))
                origin.extend([np.nan] * (len(pts) - 1))
            else:
                a.append(c0)
                b.append(c1)
                owner.append(k)
                origin.append(np.nan)
    return (
        np.array(a, dtype=float),
        np.array(b, dtype=float),
        np.array(owner, dtype=np.intp),
        np.array(origin, dtype=float),
    )


def integrate_cells(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lo: Sequence[float],
    hi: Sequence[float],
    jumps: Sequence[float] = (),
    singular_at: float | None = None,
    rtol: float = 1e-13,
    atol: float = 1e-17,
    max_depth: int = 48,
    max_pieces: int = 2_000_000,
) -> np.ndarray:
    """Integrate ``f`` over each interval ``[lo[k], hi[k])``.

    Parameters
    ----------
    f : callable
        ``f(x, owner)`` evaluated on an array of points ``x``; ``owner`` has
        the same shape and holds the index ``k`` of the cell each point
        belongs to, which lets the integrand depend on the cell.
    lo, hi : sequences of float
        Cell endpoints, ``lo[k] < hi[k]``.
    jumps : sequence of float
        Discontinuity points of the integrand.
    singular_at : float, optional
        Point near which ``f`` behaves like a square root or oscillates.
        Cells starting there are refined geometrically before the adaptive
        pass, and the innermost piece is integrated after the substitution
        ``x = singular_at + u^2``.
    rtol : float
        Local acceptance tolerance relative to the integral of ``|f|``.
    atol : float
        Absolute tolerance per unit length. It only matters when the
        integrand is so small on a piece that the relative test is below
        floating-point resolution, e.g. ``(s - beta)^2`` on a narrow cell.

    Returns
    -------
    numpy.ndarray
        One integral per cell.

    Raises
    ------
    QuadratureFailure
        If some piece still fails the tolerance after ``max_depth`` bisections
        or the number of live pieces exceeds ``max_pieces``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = np.zeros(len(lo))
    if len(lo) == 0:
        return out
    if np.any(hi <= lo):
        raise ValueError("every cell must have positive length")
    a, b, owner, origin = _presplit(lo, hi, tuple(jumps), singular_at)
    depth = 0
    while len(a):
        m = 0.5 * (a + b)
        coarse, _ = _gl(f, a, b, owner, origin)
        left, left_abs = _gl(f, a, m, owner, origin)
        right, right_abs = _gl(f, m, b, owner, origin)
        fine = left + right
        ok = np.abs(fine - coarse) <= np.maximum(rtol * (left_abs + right_abs), atol * (b - a))
        np.add.at(out, owner[ok], fine[ok])
        bad = ~ok
        if not bad.any():
            break
        depth += 1
        if depth > max_depth or 2 * bad.sum() > max_pieces:
            worst = int(np.argmax(np.abs(fine - coarse) * bad))
            raise QuadratureFailure(
                f"tolerance not reached on [{a[worst]:.6g}, {b[worst]:.6g}] after {depth} bisections"
            )
        a, m, b, owner, origin = a[bad], m[bad], b[bad], owner[bad], origin[bad]
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        owner, origin = np.concatenate([owner, owner]), np.concatenate([origin, origin])
    return out


def integrate(func: Callable[[np.ndarray], np.ndarray], a: float, b: float, **kw) -> float:
    """Scalar convenience wrapper around :func:`integrate_cells`."""
    return float(integrate_cells(lambda x, _: func(x), [a], [b], **kw)[0])
