"""Slot packing of the training matrix into fixed-size blocks.

The folded matrix Z is cut into m x g sub-matrices whose product m * g
equals the ciphertext slot count; each block is packed row-major into one
slot vector.  Row blocks align with mini-batches, column blocks cover the
(1 + f) model coefficients g at a time, and short edges are zero-padded.
Weight-like vectors are packed by replicating one g-wide segment down all
m rows of the matching column block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hesim import HeParams

__all__ = [
    "BlockLayout",
    "plan_layout",
    "pack_block",
    "unpack_block",
    "pack_matrix",
    "unpack_matrix",
    "replicate_rows",
    "filter_first_column",
    "save_packed",
    "load_packed",
]


@dataclass(frozen=True)
class BlockLayout:
    """Partition geometry for an n x (1 + f) matrix into m x g blocks."""

    n: int
    f: int
    m: int
    g: int
    row_blocks: int
    col_blocks: int
    pad_rows: int
    pad_cols: int

    @property
    def slots(self) -> int:
        return self.m * self.g

    @property
    def cols(self) -> int:
        return self.f + 1

    def rows_in_block(self, i: int) -> int:
        """Real (unpadded) rows in row block ``i``."""
        if not 0 <= i < self.row_blocks:
            raise ValueError(f"row block {i} out of range [0, {self.row_blocks})")
        return min(self.m, self.n - i * self.m)


def plan_layout(n: int, f: int, params: HeParams, batch_rows: int) -> BlockLayout:
    """Fix the block geometry: m = batch_rows, g = slots / m.

    ``batch_rows`` must be a power of two no larger than the slot count so
    mini-batch boundaries coincide with ciphertext boundaries.
    """
    if n < 1 or f < 1:
        raise ValueError(f"need n >= 1 and f >= 1, got n={n}, f={f}")
    if batch_rows < 1 or batch_rows & (batch_rows - 1) != 0:
        raise ValueError(f"batch_rows must be a power of two, got {batch_rows}")
    slots = params.slots
    if batch_rows > slots:
        raise ValueError(f"batch_rows {batch_rows} exceeds slot count {slots}")
    m = batch_rows
    g = slots // m
    cols = f + 1
    row_blocks = -(-n // m)
    col_blocks = -(-cols // g)
    return BlockLayout(
        n=n,
        f=f,
        m=m,
        g=g,
        row_blocks=row_blocks,
        col_blocks=col_blocks,
        pad_rows=row_blocks * m - n,
        pad_cols=col_blocks * g - cols,
    )


def pack_block(sub: np.ndarray, layout: BlockLayout) -> np.ndarray:
    """Row-major slot vector of one sub-matrix, zero-padded to m x g."""
    sub = np.asarray(sub, dtype=np.float64)
    if sub.ndim != 2 or sub.shape[0] > layout.m or sub.shape[1] > layout.g:
        raise ValueError(f"block of shape {sub.shape} does not fit {layout.m}x{layout.g}")
    full = np.zeros((layout.m, layout.g))
    full[: sub.shape[0], : sub.shape[1]] = sub
    return full.reshape(-1)


def unpack_block(slots: np.ndarray, layout: BlockLayout) -> np.ndarray:
    slots = np.asarray(slots)
    if slots.shape != (layout.slots,):
        raise ValueError(f"slot vector has shape {slots.shape}, expected ({layout.slots},)")
    return slots.reshape(layout.m, layout.g)


def pack_matrix(Z: np.ndarray, layout: BlockLayout) -> list[list[np.ndarray]]:
    """All blocks of Z, indexed [row_block][col_block]."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape != (layout.n, layout.cols):
        raise ValueError(f"matrix has shape {Z.shape}, layout expects ({layout.n}, {layout.cols})")
    out = []
    for i in range(layout.row_blocks):
        row = []
        for j in range(layout.col_blocks):
            sub = Z[i * layout.m : (i + 1) * layout.m, j * layout.g : (j + 1) * layout.g]
            row.append(pack_block(sub, layout))
        out.append(row)
    return out


def unpack_matrix(blocks: list[list[np.ndarray]], layout: BlockLayout) -> np.ndarray:
    """Reassemble Z from its blocks, stripping the padding."""
    full = np.zeros((layout.row_blocks * layout.m, layout.col_blocks * layout.g))
    for i, row in enumerate(blocks):
        for j, slots in enumerate(row):
            full[i * layout.m : (i + 1) * layout.m, j * layout.g : (j + 1) * layout.g] = (
                unpack_block(np.real(slots), layout)
            )
    return full[: layout.n, : layout.cols]


def replicate_rows(v: np.ndarray, layout: BlockLayout) -> list[np.ndarray]:
    """Pack a coefficient-length vector as one row-replicated block per col block."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.shape[0] > layout.cols:
        raise ValueError(f"vector of length {v.shape[0]} exceeds {layout.cols} coefficients")
    padded = np.zeros(layout.col_blocks * layout.g)
    padded[: v.shape[0]] = v
    return [
        np.tile(padded[j * layout.g : (j + 1) * layout.g], layout.m)
        for j in range(layout.col_blocks)
    ]


def filter_first_column(layout: BlockLayout) -> list[np.ndarray]:
    """Constant masks keeping only global column 0, one per col block."""
    out = []
    for j in range(layout.col_blocks):
        mask = np.zeros(layout.slots)
        if j == 0:
            mask[:: layout.g] = 1.0
        out.append(mask)
    return out


def save_packed(directory, blocks: list[list[np.ndarray]], layout: BlockLayout) -> None:
    """Manifest (JSON) plus binary slot dumps for a packed matrix."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "n": layout.n,
        "f": layout.f,
        "m": layout.m,
        "g": layout.g,
        "row_blocks": layout.row_blocks,
        "col_blocks": layout.col_blocks,
        "blocks": [
            {"row": i, "col": j, "key": f"block_{i}_{j}"}
            for i in range(layout.row_blocks)
            for j in range(layout.col_blocks)
        ],
    }
    with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    arrays = {
        f"block_{i}_{j}": np.asarray(blocks[i][j])
        for i in range(layout.row_blocks)
        for j in range(layout.col_blocks)
    }
    np.savez(directory / "blocks.npz", **arrays)


def load_packed(directory) -> tuple[list[list[np.ndarray]], BlockLayout]:
    directory = Path(directory)
    with open(directory / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    layout = BlockLayout(
        n=manifest["n"],
        f=manifest["f"],
        m=manifest["m"],
        g=manifest["g"],
        row_blocks=manifest["row_blocks"],
        col_blocks=manifest["col_blocks"],
        pad_rows=manifest["row_blocks"] * manifest["m"] - manifest["n"],
        pad_cols=manifest["col_blocks"] * manifest["g"] - (manifest["f"] + 1),
    )
    with np.load(directory / "blocks.npz") as arrays:
        blocks = [
            [arrays[f"block_{i}_{j}"] for j in range(layout.col_blocks)]
            for i in range(layout.row_blocks)
        ]
    return blocks, layout
