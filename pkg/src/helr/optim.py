"""Plaintext reference trainers: accelerated gradient ascent on the
logistic log-likelihood, in baseline and curvature-scaled variants, with
full-batch and mini-batch scheduling.

The update keeps two coupled weight vectors.  W is the point where
gradients are evaluated; V trails it and supplies the momentum mix:

    V_temp = W + direction
    W'     = (1 - eta) * V_temp + eta * V
    V'     = V_temp

where ``direction`` is gamma * g for the baseline and
(1 + gamma) * (b * g) for the scaled variant, and eta follows the
accelerated alpha recurrence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .data import Dataset, build_z
from .quadgrad import QuadScaler, quad_gradient
from .sigmoid import G8, G16, PolyApprox, sigmoid

__all__ = [
    "LrSchedule",
    "NagState",
    "TrainConfig",
    "TrainResult",
    "f2",
    "initial_state",
    "nag_step",
    "log_likelihood",
    "gradient",
    "train",
    "predict",
    "accuracy",
    "auroc",
    "sigmoid_evaluator",
    "write_metrics_csv",
]

ALPHA0_INIT = 0.01

SIGMOID_CHOICES = ("exact", "g8", "g16")


@dataclass(frozen=True)
class LrSchedule:
    """Decaying learning rate: max - (max - min) * (t / T) ** gamma.

    Hits ``max`` at t = 0 and ``min`` at t = T; clamps to ``min`` beyond T.
    Larger gamma delays the decay.
    """

    max: float
    min: float
    T: int
    gamma: float

    def __post_init__(self):
        if self.max < self.min:
            raise ValueError(f"need max >= min, got {self.max} < {self.min}")
        if self.T < 1:
            raise ValueError(f"need T >= 1, got {self.T}")
        if self.gamma <= 0:
            raise ValueError(f"need gamma > 0, got {self.gamma}")

    @classmethod
    def constant(cls, value: float) -> "LrSchedule":
        return cls(max=value, min=value, T=1, gamma=1.0)


def f2(schedule: LrSchedule, t: int) -> float:
    if t < 0:
        raise ValueError(f"iteration count must be >= 0, got {t}")
    frac = min(t, schedule.T) / schedule.T
    return schedule.max - (schedule.max - schedule.min) * frac**schedule.gamma


@dataclass(frozen=True)
class NagState:
    """Paired iterates plus the acceleration scalars."""

    w: np.ndarray
    v: np.ndarray
    alpha0: float
    alpha1: float
    t: int = 0


def _next_alpha(alpha: float) -> float:
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * alpha * alpha))


def initial_state(dim: int) -> NagState:
    return NagState(
        w=np.zeros(dim),
        v=np.zeros(dim),
        alpha0=ALPHA0_INIT,
        alpha1=_next_alpha(ALPHA0_INIT),
    )


def nag_step(state: NagState, direction: np.ndarray, eta: float) -> NagState:
    """One accelerated update; ``direction`` is the full ascent step."""
    v_temp = state.w + direction
    w_new = (1.0 - eta) * v_temp + eta * state.v
    return NagState(
        w=w_new,
        v=v_temp,
        alpha0=state.alpha1,
        alpha1=_next_alpha(state.alpha1),
        t=state.t + 1,
    )


def log_likelihood(Z: np.ndarray, w: np.ndarray) -> float:
    """Averaged log-likelihood, always <= 0; stable for large |z.w|."""
    u = Z @ w
    return float(-np.mean(np.logaddexp(0.0, -u)))


def gradient(Z: np.ndarray, w: np.ndarray, sig: Callable = sigmoid) -> np.ndarray:
    """Unaveraged ascent gradient: g[j] = sum_i (1 - sig(z_i . w)) * Z[i][j].

    The 1/n factor is folded into the step size by the caller.  ``sig`` may
    be the exact sigmoid or a polynomial stand-in.
    """
    u = Z @ w
    return Z.T @ (1.0 - np.asarray(sig(u)))


def sigmoid_evaluator(name: str) -> Callable:
    if name == "exact":
        return sigmoid
    if name == "g8":
        return G8
    if name == "g16":
        return G16
    raise ValueError(f"unknown sigmoid {name!r}; choose from {SIGMOID_CHOICES}")


def poly_for(name: str) -> PolyApprox:
    if name == "g8":
        return G8
    if name == "g16":
        return G16
    raise ValueError(f"no polynomial form for sigmoid {name!r}")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "full_batch"
    batch_size: int = 1024
    epochs: Optional[int] = None
    max_iterations: int = 26
    schedule: LrSchedule = field(default_factory=lambda: LrSchedule(2.0, 1.0, 36, 2.5))
    sigmoid: str = "exact"
    shuffle: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("full_batch", "mini_batch"):
            raise ValueError(f"mode must be full_batch or mini_batch, got {self.mode!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_iterations < 0:
            raise ValueError(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.sigmoid not in SIGMOID_CHOICES:
            raise ValueError(f"sigmoid must be one of {SIGMOID_CHOICES}, got {self.sigmoid!r}")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class TrainResult:
    weights: np.ndarray
    metrics: list[dict]
    weight_trace: Optional[list[np.ndarray]] = None


METRIC_COLUMNS = (
    "iteration",
    "log_likelihood",
    "train_acc",
    "val_acc",
    "auroc",
    "lr",
    "exceed_rate",
    "u_absmax",
)


def predict(w: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Threshold the linear score at 0 (equivalently the sigmoid at 1/2)."""
    return np.where(X @ w >= 0.0, 1.0, -1.0)


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(np.mean(np.asarray(y_true) == np.asarray(y_pred)))


def auroc(y_true: np.ndarray, scores: np.ndarray) -> float:
    """Rank-statistic AUROC with midrank handling for tied scores."""
    y_true = np.asarray(y_true)
    scores = np.asarray(scores, dtype=np.float64)
    pos = y_true > 0
    n_pos = int(pos.sum())
    n_neg = y_true.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC undefined: only one class present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.shape[0]:
        j = i
        while j + 1 < scores.shape[0] and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _batch_bounds(n: int, batch_size: int) -> list[tuple[int, int]]:
    return [(k, min(k + batch_size, n)) for k in range(0, n, batch_size)]


def train(
    ds: Dataset,
    cfg: TrainConfig,
    bbar: Union[QuadScaler, Sequence[QuadScaler], None] = None,
    val: Optional[Dataset] = None,
    trace_weights: bool = False,
) -> TrainResult:
    """Run the accelerated trainer and collect a per-iteration trace.

    ``bbar`` selects the variant: None runs the baseline (direction
    gamma_t * g with gamma_t = lr_t / n_train); a single scaler or one
    scaler per mini-batch runs the curvature-scaled variant (direction
    (1 + gamma_t) * (b * g) with gamma_t = lr_t / batch_rows).

    Weights start at zero.  Mini-batch mode walks consecutive row slices
    in order, optionally reshuffling the batch order each epoch.  The
    trace rows record the training log-likelihood (exact sigmoid), the
    accuracy of W after the update, validation metrics when ``val`` is
    given, and the rate at which sigmoid inputs left the polynomial's
    interval (blank for the exact sigmoid).
    """
    n = ds.n_samples
    Z = build_z(ds).Z
    sig = sigmoid_evaluator(cfg.sigmoid)
    interval = None if cfg.sigmoid == "exact" else poly_for(cfg.sigmoid).interval

    if cfg.mode == "mini_batch":
        if cfg.batch_size > n:
            raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {n}")
        bounds = _batch_bounds(n, cfg.batch_size)
    else:
        bounds = [(0, n)]
    m_batches = len(bounds)

    scalers: Optional[list[QuadScaler]]
    if bbar is None:
        scalers = None
    elif isinstance(bbar, QuadScaler):
        scalers = [bbar] * m_batches
    else:
        scalers = list(bbar)
        if len(scalers) != m_batches:
            raise ValueError(f"got {len(scalers)} scalers for {m_batches} batches")

    total = cfg.max_iterations
    if cfg.epochs is not None:
        total = min(total, cfg.epochs * m_batches)

    state = initial_state(ds.X.shape[1])
    order = list(range(m_batches))
    rng = np.random.default_rng(cfg.seed)
    metrics: list[dict] = []
    trace: list[np.ndarray] = []

    for step in range(total):
        pos = step % m_batches
        if cfg.shuffle and cfg.mode == "mini_batch" and pos == 0:
            rng.shuffle(order)
        lo, hi = bounds[order[pos]]
        Zb = Z[lo:hi]

        u = Zb @ state.w
        g = Zb.T @ (1.0 - np.asarray(sig(u)))
        lr = f2(cfg.schedule, state.t)
        eta = (1.0 - state.alpha0) / state.alpha1
        if scalers is None:
            direction = (lr / n) * g
        else:
            gamma = lr / Zb.shape[0]
            direction = (1.0 + gamma) * quad_gradient(scalers[order[pos]], g)
        state = nag_step(state, direction, eta)

        row = {
            "iteration": state.t,
            "log_likelihood": log_likelihood(Z, state.w),
            "train_acc": accuracy(ds.y, predict(state.w, ds.X)),
            "val_acc": accuracy(val.y, predict(state.w, val.X)) if val is not None else "",
            "auroc": auroc(val.y, val.X @ state.w) if val is not None else "",
            "lr": lr,
            "exceed_rate": float(np.mean((u < interval[0]) | (u > interval[1])))
            if interval is not None
            else "",
            "u_absmax": float(np.max(np.abs(u))) if u.size else 0.0,
        }
        metrics.append(row)
        if trace_weights:
            trace.append(state.w.copy())

    return TrainResult(
        weights=state.w.copy(),
        metrics=metrics,
        weight_trace=trace if trace_weights else None,
    )


def write_metrics_csv(path, metrics: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in metrics:
            writer.writerow({k: row.get(k, "") for k in METRIC_COLUMNS})
