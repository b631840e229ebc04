"""Encrypted-domain training over packed blocks.

The cloud-side circuit evaluates, per iteration and entirely on
ciphertexts: the linear scores of one batch, a degree-3 polynomial
replacement for (1 - sigmoid), the per-coefficient gradient sums, the
componentwise product with the encrypted gradient scales, and the
two-vector accelerated update.  Step scalars (learning rate, momentum
mix) depend only on the public iteration count, so they enter as constant
products rather than ciphertext products.

Weight ciphertexts are bootstrapped on demand: the budget needed for one
iteration is measured on the first successful pass, and later iterations
refresh up front whenever the remaining modulus cannot cover it.  Every
iteration appends an operation/level record to the ledger.

Per-iteration quality metrics require decrypting the weights; that
instrumentation is test-harness privilege and sits outside the circuit
path, which never decrypts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .data import Dataset, build_z
from .encoding import BlockLayout, pack_matrix, plan_layout, replicate_rows
from .hesim import HeParams, NeedsBootstrap, SimCiphertext, SimContext
from .optim import (
    accuracy,
    auroc,
    f2,
    log_likelihood,
    poly_for,
    predict,
    TrainConfig,
)
from .quadgrad import merge_bbar, scaler_for
from .sigmoid import PolyApprox

__all__ = [
    "EncModelState",
    "PreparedData",
    "EncTrainResult",
    "client_prepare",
    "enc_gradient",
    "enc_quad_gradient",
    "enc_nag_update",
    "bootstrap_policy",
    "train_encrypted",
    "decode_weights",
    "write_ledger_csv",
    "LEDGER_COLUMNS",
]

ALPHA0_INIT = 0.01

LEDGER_COLUMNS = (
    "iteration",
    "muls",
    "cmuls",
    "rotations",
    "adds",
    "bootstraps",
    "boot_ops",
    "level_before",
    "level_start",
    "level_after",
    "consumed_bits",
    "lr",
)


@dataclass(frozen=True)
class EncModelState:
    """Weight/companion ciphertexts (one per col block) plus step scalars."""

    ct_w: tuple[SimCiphertext, ...]
    ct_v: tuple[SimCiphertext, ...]
    alpha0: float
    alpha1: float
    t: int = 0

    @property
    def min_level(self) -> int:
        return min(ct.level_bits for ct in self.ct_w + self.ct_v)


@dataclass(frozen=True)
class PreparedData:
    """Client-side upload: data blocks, scale blocks, and zeroed weights."""

    ct_z: tuple[tuple[SimCiphertext, ...], ...]
    ct_bbar: tuple[tuple[SimCiphertext, ...], ...]
    state: EncModelState
    layout: BlockLayout

    @property
    def z_block_count(self) -> int:
        return sum(len(row) for row in self.ct_z)

    @property
    def bbar_block_count(self) -> int:
        return sum(len(row) for row in self.ct_bbar)


def _next_alpha(alpha: float) -> float:
    return 0.5 * (1.0 + float(np.sqrt(1.0 + 4.0 * alpha * alpha)))


def client_prepare(
    ds: Dataset,
    ctx: SimContext,
    layout: BlockLayout,
    mode: str = "mini_batch",
    epsilon: float = 1e-8,
) -> PreparedData:
    """Pack and encrypt Z, the gradient scales, and zero initial weights.

    Mini-batch mode ships one scale block set per row block; full-batch
    mode merges the per-block scales into a single set covering the whole
    dataset.  Scales are computed from the real rows only, so padding
    never enters the curvature bound.
    """
    Z = build_z(ds).Z
    ct_z = tuple(
        tuple(ctx.enc(vec) for vec in row) for row in pack_matrix(Z, layout)
    )
    scalers = [
        scaler_for(ds.X[i * layout.m : i * layout.m + layout.rows_in_block(i)], epsilon)
        for i in range(layout.row_blocks)
    ]
    if mode == "mini_batch":
        ct_bbar = tuple(
            tuple(ctx.enc(vec) for vec in replicate_rows(s.b, layout)) for s in scalers
        )
    elif mode == "full_batch":
        merged = merge_bbar(scalers)
        ct_bbar = (tuple(ctx.enc(vec) for vec in replicate_rows(merged.b, layout)),)
    else:
        raise ValueError(f"mode must be mini_batch or full_batch, got {mode!r}")
    zeros = np.zeros(layout.slots)
    state = EncModelState(
        ct_w=tuple(ctx.enc(zeros) for _ in range(layout.col_blocks)),
        ct_v=tuple(ctx.enc(zeros) for _ in range(layout.col_blocks)),
        alpha0=ALPHA0_INIT,
        alpha1=_next_alpha(ALPHA0_INIT),
    )
    return PreparedData(ct_z=ct_z, ct_bbar=ct_bbar, state=state, layout=layout)


def _poly_coeffs(poly: PolyApprox) -> tuple[float, float, float, float]:
    if poly.degree > 3:
        raise ValueError(f"circuit supports degree <= 3, got degree {poly.degree}")
    c = list(poly.coefficients) + [0.0] * (4 - len(poly.coefficients))
    return c[0], c[1], c[2], c[3]


def enc_gradient(
    ctx: SimContext,
    ct_z_row: tuple[SimCiphertext, ...],
    ct_w: tuple[SimCiphertext, ...],
    poly: PolyApprox,
    layout: BlockLayout,
) -> list[SimCiphertext]:
    """Gradient of one row block: g[j] = sum_i (1 - poly(z_i . w)) * Z[i][j].

    Circuit: multiply Z by the replicated weights, add across col blocks,
    row-sum to get the scores replicated per row, evaluate the complement
    polynomial (two ciphertext products via  c0 + u*(c1 + c3*u^2), plus one
    constant product per nonzero even coefficient), multiply back into Z,
    and column-sum over the full row dimension, which lands already
    replicated.  Zero-padded rows contribute nothing because their Z
    entries are zero.
    """
    q0, q1, q2, q3 = _poly_coeffs(poly.complement())
    acc = None
    for z_ct, w_ct in zip(ct_z_row, ct_w):
        prod = ctx.mul(z_ct, w_ct)
        acc = prod if acc is None else ctx.add(acc, prod)
    u = ctx.sum_col_vec(acc, layout)

    u2 = ctx.mul(u, u)
    inner = ctx.cadd(ctx.cmul(u2, q3), q1)
    qu = ctx.mul(u, inner)
    if q2 != 0.0:
        qu = ctx.add(qu, ctx.cmul(u2, q2))
    qu = ctx.cadd(qu, q0)

    out = []
    for z_ct in ct_z_row:
        term = ctx.mul(qu, z_ct)
        out.append(ctx.sum_rows(term, layout))
    return out


def enc_quad_gradient(
    ctx: SimContext,
    ct_g: list[SimCiphertext],
    ct_bbar: tuple[SimCiphertext, ...],
) -> list[SimCiphertext]:
    """Scale the gradient: exactly one ciphertext product per col block."""
    if len(ct_g) != len(ct_bbar):
        raise ValueError(f"block count mismatch: {len(ct_g)} vs {len(ct_bbar)}")
    return [ctx.mul(g, b) for g, b in zip(ct_g, ct_bbar)]


def enc_nag_update(
    ctx: SimContext,
    state: EncModelState,
    ct_dir: list[SimCiphertext],
    eta: float,
    gamma: float,
    enhanced: bool = True,
) -> EncModelState:
    """Two-vector accelerated update with public step scalars.

    The direction ciphertexts carry the (scaled) gradient; the step
    multiplier is (1 + gamma) for the curvature-scaled variant and gamma
    for the baseline.  All mixing uses constant products, preserving the
    row-replication of the weight blocks.
    """
    mult = (1.0 + gamma) if enhanced else gamma
    new_w, new_v = [], []
    for c in range(len(state.ct_w)):
        v_temp = ctx.add(state.ct_w[c], ctx.cmul(ct_dir[c], mult))
        w_next = ctx.add(ctx.cmul(v_temp, 1.0 - eta), ctx.cmul(state.ct_v[c], eta))
        new_w.append(w_next)
        new_v.append(v_temp)
    return EncModelState(
        ct_w=tuple(new_w),
        ct_v=tuple(new_v),
        alpha0=state.alpha1,
        alpha1=_next_alpha(state.alpha1),
        t=state.t + 1,
    )


def bootstrap_policy(
    ctx: SimContext, state: EncModelState, needed_bits: Optional[int]
) -> tuple[EncModelState, bool]:
    """Refresh all weight/companion blocks when the next iteration cannot fit.

    ``needed_bits`` is the measured per-iteration consumption; None means
    not yet calibrated, in which case no proactive refresh happens (the
    trainer falls back to refresh-on-demand).
    """
    if needed_bits is None:
        return state, False
    if state.min_level - needed_bits >= ctx.params.log_delta:
        return state, False
    return _refresh(ctx, state), True


def _refresh(ctx: SimContext, state: EncModelState) -> EncModelState:
    return replace(
        state,
        ct_w=tuple(ctx.bootstrap(ct) for ct in state.ct_w),
        ct_v=tuple(ctx.bootstrap(ct) for ct in state.ct_v),
    )


def decode_weights(
    ctx: SimContext,
    cts: tuple[SimCiphertext, ...],
    layout: BlockLayout,
    check: bool = True,
    tol: float = 1e-9,
) -> np.ndarray:
    """Decrypt row-replicated blocks back to the coefficient vector.

    With the noise model off the rows of each block must agree and the
    imaginary parts must vanish; ``check`` enforces both.
    """
    segments = []
    for ct in cts:
        grid = ctx.dec(ct).reshape(layout.m, layout.g)
        if check:
            spread = float(np.max(np.abs(grid - grid[0])))
            if spread > tol:
                raise ValueError(f"replication broken: row spread {spread:.3e} exceeds {tol:.1e}")
            imag = float(np.max(np.abs(grid.imag)))
            if imag > tol:
                raise ValueError(f"non-real decode: |imag| up to {imag:.3e}")
        segments.append(np.real(grid[0]))
    return np.concatenate(segments)[: layout.cols]


@dataclass
class EncTrainResult:
    weights: np.ndarray
    ledger: list[dict]
    metrics: list[dict]
    layout: BlockLayout
    bbar_block_count: int
    z_block_count: int
    weight_trace: Optional[list[np.ndarray]] = None


def train_encrypted(
    ds: Dataset,
    cfg: TrainConfig,
    params: HeParams,
    val: Optional[Dataset] = None,
    epsilon: float = 1e-8,
    enhanced: bool = True,
    ctx: Optional[SimContext] = None,
    trace_weights: bool = False,
) -> EncTrainResult:
    """Full encrypted pipeline: prepare, iterate, refresh, decrypt.

    Mini-batch mode visits one row block per iteration (cycling, optional
    per-epoch shuffle); full-batch mode accumulates every row block's
    gradient before the single scale product.  The polynomial sigmoid is
    mandatory: the exact sigmoid does not exist in-circuit.
    """
    if cfg.sigmoid == "exact":
        raise ValueError("encrypted training requires a polynomial sigmoid (g8 or g16)")
    poly = poly_for(cfg.sigmoid)
    ctx = ctx if ctx is not None else SimContext(params)

    layout = plan_layout(ds.n_samples, ds.n_features, params, cfg.batch_size)
    prep = client_prepare(ds, ctx, layout, mode=cfg.mode, epsilon=epsilon)
    state = prep.state

    total = cfg.max_iterations
    m_batches = layout.row_blocks if cfg.mode == "mini_batch" else 1
    if cfg.epochs is not None:
        total = min(total, cfg.epochs * m_batches)

    Z_full = build_z(ds).Z
    order = list(range(layout.row_blocks))
    rng = np.random.default_rng(cfg.seed)
    check_dec = params.noise_sigma == 0.0

    needed_bits: Optional[int] = None
    ledger: list[dict] = []
    metrics: list[dict] = []
    trace: list[np.ndarray] = []

    for step in range(total):
        level_before = state.min_level
        snapshot = dict(ctx.counters)
        state, refreshed = bootstrap_policy(ctx, state, needed_bits)

        if cfg.mode == "mini_batch":
            pos = step % layout.row_blocks
            if cfg.shuffle and pos == 0:
                rng.shuffle(order)
            block_ids = [order[pos]]
            gamma_rows = layout.rows_in_block(order[pos])
            bbar_idx = order[pos]
        else:
            block_ids = list(range(layout.row_blocks))
            gamma_rows = ds.n_samples
            bbar_idx = 0

        lr = f2(cfg.schedule, state.t)
        eta = (1.0 - state.alpha0) / state.alpha1
        if enhanced:
            gamma = lr / gamma_rows
        else:
            gamma = lr / ds.n_samples

        w_before = decode_weights(ctx, state.ct_w, layout, check=check_dec)

        while True:
            level_start = state.min_level
            try:
                acc_g = None
                for k in block_ids:
                    gk = enc_gradient(ctx, prep.ct_z[k], state.ct_w, poly, layout)
                    if acc_g is None:
                        acc_g = gk
                    else:
                        acc_g = [ctx.add(a, b) for a, b in zip(acc_g, gk)]
                if enhanced:
                    direction = enc_quad_gradient(ctx, acc_g, prep.ct_bbar[bbar_idx])
                else:
                    direction = acc_g
                new_state = enc_nag_update(ctx, state, direction, eta, gamma, enhanced)
                break
            except NeedsBootstrap:
                if level_start >= params.log_q:
                    raise
                # A failed attempt only pollutes the counters; roll them
                # back, refresh, and rerun the whole iteration.
                ctx.counters = dict(snapshot)
                state = _refresh(ctx, state)
                refreshed = True
        state = new_state

        level_after = state.min_level
        consumed = level_start - level_after
        needed_bits = consumed if needed_bits is None else max(needed_bits, consumed)
        delta = {k: ctx.counters[k] - snapshot[k] for k in ctx.counters}
        ledger.append(
            {
                "iteration": state.t,
                "muls": delta["mul"],
                "cmuls": delta["cmul"],
                "rotations": delta["rotate"],
                "adds": delta["add"] + delta["cadd"],
                "bootstraps": 1 if refreshed else 0,
                "boot_ops": delta["bootstrap"],
                "level_before": level_before,
                "level_start": level_start,
                "level_after": level_after,
                "consumed_bits": consumed,
                "lr": lr,
            }
        )

        w_now = decode_weights(ctx, state.ct_w, layout, check=check_dec)
        u_batch = np.concatenate(
            [
                Z_full[k * layout.m : k * layout.m + layout.rows_in_block(k)] @ w_before
                for k in block_ids
            ]
        )
        lo, hi = poly.interval
        metrics.append(
            {
                "iteration": state.t,
                "log_likelihood": log_likelihood(Z_full, w_now),
                "train_acc": accuracy(ds.y, predict(w_now, ds.X)),
                "val_acc": accuracy(val.y, predict(w_now, val.X)) if val is not None else "",
                "auroc": auroc(val.y, val.X @ w_now) if val is not None else "",
                "lr": lr,
                "exceed_rate": float(np.mean((u_batch < lo) | (u_batch > hi))),
                "u_absmax": float(np.max(np.abs(u_batch))),
            }
        )
        if trace_weights:
            trace.append(w_now.copy())

    final_w = decode_weights(ctx, state.ct_w, layout, check=check_dec)
    return EncTrainResult(
        weights=final_w,
        ledger=ledger,
        metrics=metrics,
        layout=layout,
        bbar_block_count=prep.bbar_block_count,
        z_block_count=prep.z_block_count,
        weight_trace=trace if trace_weights else None,
    )


def write_ledger_csv(path, ledger: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LEDGER_COLUMNS)
        writer.writeheader()
        for row in ledger:
            writer.writerow({k: row.get(k, "") for k in LEDGER_COLUMNS})
