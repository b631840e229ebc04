"""Curvature-scaled gradient directions from a fixed Hessian bound.

The logistic-loss Hessian is bounded uniformly in the weights by a matrix
proportional to X'X.  Taking reciprocal absolute row sums of that bound
gives one positive scale per coefficient; multiplying the raw gradient by
those scales componentwise yields a preconditioned ascent direction that
can be applied with a learning rate near 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "QuadScaler",
    "hessian_bound",
    "build_bbar",
    "merge_bbar",
    "quad_gradient",
    "per_batch_scalers",
    "scaler_for",
    "save_scaler",
    "load_scaler",
]

DEFAULT_EPSILON = 1e-8


@dataclass(frozen=True, eq=False)
class QuadScaler:
    """Diagonal of the gradient-scaling matrix: one positive scale per weight."""

    b: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        object.__setattr__(self, "b", b)
        if b.ndim != 1:
            raise ValueError(f"scale vector must be 1-D, got shape {b.shape}")
        if not np.all(b > 0):
            raise ValueError("all scales must be strictly positive")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def __len__(self) -> int:
        return self.b.shape[0]


def hessian_bound(X: np.ndarray) -> np.ndarray:
    """Magnitude of the fixed logistic-Hessian bound, X'X / 4.

    ``X`` is the design matrix including the bias column.  Only absolute
    row sums of the bound are consumed downstream, so the sign convention
    is dropped here.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"design matrix must be 2-D, got shape {X.shape}")
    return 0.25 * (X.T @ X)


def build_bbar(H: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> QuadScaler:
    """Scales from a (bounded) Hessian: b[j] = 1 / (eps + sum_i |H[j][i]|)."""
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"Hessian must be square, got shape {H.shape}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return QuadScaler(1.0 / (epsilon + np.abs(H).sum(axis=1)), epsilon)


def merge_bbar(scalers: Sequence[QuadScaler]) -> QuadScaler:
    """Combine per-batch scalers into the whole-dataset scaler.

    Harmonic-style merge: b[j] = 1 / sum_k (1 / b_k[j]).  Each part
    contributes its own epsilon term to the denominator; that small
    overcount is inherent to merging and is not corrected here.
    """
    if len(scalers) == 0:
        raise ValueError("need at least one scaler to merge")
    dim = len(scalers[0])
    for i, s in enumerate(scalers):
        if len(s) != dim:
            raise ValueError(f"scaler {i} has length {len(s)}, expected {dim}")
    inv = np.zeros(dim)
    for s in scalers:
        inv += 1.0 / s.b
    return QuadScaler(1.0 / inv, max(s.epsilon for s in scalers))


def quad_gradient(scaler: QuadScaler, g: np.ndarray) -> np.ndarray:
    """Componentwise scaled gradient; preserves the sign pattern of ``g``."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != scaler.b.shape:
        raise ValueError(f"length mismatch: gradient {g.shape} vs scales {scaler.b.shape}")
    return scaler.b * g


def scaler_for(X: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> QuadScaler:
    """Scaler built directly from a design matrix via the fixed bound."""
    return build_bbar(hessian_bound(X), epsilon)


def per_batch_scalers(
    X: np.ndarray, batch_size: int, epsilon: float = DEFAULT_EPSILON
) -> list[QuadScaler]:
    """One scaler per consecutive mini-batch of rows (last batch may be short)."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = X.shape[0]
    return [scaler_for(X[k : k + batch_size], epsilon) for k in range(0, n, batch_size)]


def save_scaler(path, scaler: QuadScaler) -> None:
    """One CSV row of scales, full float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(f"b{j}" for j in range(len(scaler))) + "\n")
        fh.write(",".join(repr(float(v)) for v in scaler.b) + "\n")


def load_scaler(path, epsilon: float = DEFAULT_EPSILON) -> QuadScaler:
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        vals = [float(v) for v in fh.readline().strip().split(",")]
    return QuadScaler(np.asarray(vals), epsilon)
