"""Sigmoid activation and low-degree polynomial stand-ins.

Encrypted circuits can only evaluate polynomials, so the training pipeline
replaces the sigmoid with fixed degree-3 least-squares fits over a bounded
input interval.  The two stock approximations target the intervals [-8, 8]
and [-16, 16]; a generic fitting routine covers everything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "PolyApprox",
    "G8",
    "G16",
    "sigmoid",
    "g8",
    "g16",
    "fit_least_squares",
    "max_error",
    "save_poly",
    "load_poly",
]


def sigmoid(x):
    """Numerically stable logistic function, elementwise on arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class PolyApprox:
    """Polynomial approximation of a scalar function on an interval.

    Coefficients are in ascending degree order.  Evaluation is plain
    polynomial arithmetic with no clamping: callers are responsible for
    keeping inputs inside ``interval``, and the training loop reports
    (rather than hides) excursions outside it.
    """

    coefficients: tuple[float, ...]
    interval: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.interval
        if not lo < hi:
            raise ValueError(f"interval must satisfy lo < hi, got ({lo}, {hi})")
        if not all(np.isfinite(c) for c in self.coefficients):
            raise ValueError("coefficients must be finite")
        if len(self.coefficients) == 0:
            raise ValueError("need at least one coefficient")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, np.asarray(self.coefficients))

    def complement(self) -> "PolyApprox":
        """The polynomial computing ``1 - p(x)``, used on the gradient path."""
        c = [-v for v in self.coefficients]
        c[0] += 1.0
        return PolyApprox(tuple(c), self.interval)


# Degree-3 least-squares fits of the sigmoid used by the encrypted trainer.
G8 = PolyApprox(coefficients=(0.5, 0.15, 0.0, -0.0015), interval=(-8.0, 8.0))
G16 = PolyApprox(coefficients=(0.5, 0.0843, 0.0, -0.0002), interval=(-16.0, 16.0))


def g8(x):
    return G8(x)


def g16(x):
    return G16(x)


def fit_least_squares(
    target: Callable,
    interval: tuple[float, float],
    degree: int,
    grid: int = 1601,
) -> PolyApprox:
    """Discrete least-squares polynomial fit of ``target`` on a uniform grid.

    Raises ValueError when the normal equations are singular (rank-deficient
    Vandermonde), which can only happen for degenerate grids.
    """
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    if grid < degree + 1:
        raise ValueError(f"grid must be >= degree + 1, got {grid}")
    lo, hi = interval
    if not lo < hi:
        raise ValueError(f"interval must satisfy lo < hi, got ({lo}, {hi})")
    xs = np.linspace(lo, hi, grid)
    ys = np.asarray([target(x) for x in xs], dtype=np.float64)
    V = np.vander(xs, degree + 1, increasing=True)
    coeffs, _, rank, _ = np.linalg.lstsq(V, ys, rcond=None)
    if rank < degree + 1:
        raise ValueError(f"singular normal equations: rank {rank} < {degree + 1}")
    return PolyApprox(tuple(float(c) for c in coeffs), (float(lo), float(hi)))


def max_error(p: PolyApprox, target: Callable, grid: int = 10001) -> float:
    """Max absolute deviation of ``p`` from ``target`` on a uniform grid."""
    if grid < 2:
        raise ValueError(f"grid must be >= 2, got {grid}")
    xs = np.linspace(p.interval[0], p.interval[1], grid)
    return float(np.max(np.abs(p(xs) - np.asarray([target(x) for x in xs]))))


def save_poly(path, p: PolyApprox) -> None:
    """Write a one-record CSV: degree, lo, hi, then coefficients."""
    row = [p.degree, p.interval[0], p.interval[1], *p.coefficients]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("degree,lo,hi," + ",".join(f"c{i}" for i in range(p.degree + 1)) + "\n")
        fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_poly(path) -> PolyApprox:
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        vals = [float(v) for v in fh.readline().strip().split(",")]
    degree = int(vals[0])
    return PolyApprox(tuple(vals[3 : 4 + degree]), (vals[1], vals[2]))
