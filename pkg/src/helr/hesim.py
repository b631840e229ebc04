"""Leveled, slot-packed ciphertext simulator.

This is a functional model of an approximate-HE evaluator, not
cryptography: a ciphertext is a vector of N/2 complex slots plus a ledger
of remaining modulus bits.  Every operation returns a new value; products
rescale and burn ``log_delta`` bits, constant products burn
``log_delta_c``, rotations and additions are free, and an operation whose
result would retain fewer than ``log_delta`` bits raises instead of
producing an undecryptable ciphertext.  Bootstrapping restores the full
budget while preserving the slots.

An optional Gaussian noise model perturbs every operation's output slots
relatively by sigma, emulating approximation noise; it is off by default
so circuits can be checked against plaintext oracles exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .encoding import BlockLayout

__all__ = [
    "HeParams",
    "SimCiphertext",
    "SimContext",
    "NeedsBootstrap",
    "ciphertext_size_mb",
]


class NeedsBootstrap(Exception):
    """Raised when an operation would leave too little modulus to decrypt."""


@dataclass(frozen=True)
class HeParams:
    """Scheme-level knobs: ring size, modulus budget, and rescale amounts.

    ``log_n`` fixes the slot count at 2**(log_n - 1).  ``log_q`` is the
    fresh modulus budget in bits; each ciphertext product consumes
    ``log_delta`` of it and each constant product ``log_delta_c``.
    ``noise_sigma`` > 0 switches on the relative Gaussian noise model.
    """

    log_n: int = 16
    log_q: int = 275
    log_delta: int = 30
    log_delta_c: int = 20
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.log_n < 2:
            raise ValueError(f"log_n must be >= 2, got {self.log_n}")
        if self.log_q <= self.log_delta:
            raise ValueError(f"log_q ({self.log_q}) must exceed log_delta ({self.log_delta})")
        if self.log_delta < 1 or self.log_delta_c < 1:
            raise ValueError("rescale amounts must be positive")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def slots(self) -> int:
        return 1 << (self.log_n - 1)

    @classmethod
    def from_file(cls, path) -> "HeParams":
        """Read a JSON parameter block: logN, logQ, logDelta, logDeltaC, noise, seed."""
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            log_n=int(raw.get("logN", cls.log_n)),
            log_q=int(raw.get("logQ", cls.log_q)),
            log_delta=int(raw.get("logDelta", cls.log_delta)),
            log_delta_c=int(raw.get("logDeltaC", cls.log_delta_c)),
            noise_sigma=float(raw.get("noise", 0.0)),
            seed=int(raw.get("seed", 0)),
        )


def ciphertext_size_mb(params: HeParams) -> float:
    """Nominal fresh-ciphertext size: two ring elements of N log_q-bit words."""
    bits = 2 * (1 << params.log_n) * params.log_q
    return bits / 8 / 1e6


@dataclass(frozen=True, eq=False)
class SimCiphertext:
    """Immutable slot vector plus level/scale bookkeeping."""

    slots: np.ndarray
    level_bits: int
    scale_bits: int
    boot_count: int = 0

    def __post_init__(self):
        slots = np.asarray(self.slots, dtype=np.complex128)
        slots.setflags(write=False)
        object.__setattr__(self, "slots", slots)
        if self.level_bits < 0:
            raise ValueError("level_bits must be >= 0")


class SimContext:
    """Evaluator bound to one parameter set.

    Keeps running operation counters (for circuit ledgers) and the seeded
    noise stream; the ciphertext values themselves are immutable.
    """

    COUNTER_KEYS = ("enc", "dec", "add", "cadd", "mul", "cmul", "imul", "rotate", "bootstrap")

    def __init__(self, params: HeParams):
        self.params = params
        self._rng = np.random.default_rng(params.seed)
        self.counters = dict.fromkeys(self.COUNTER_KEYS, 0)

    def reset_counters(self) -> dict:
        """Return the current counts and zero them."""
        snapshot = dict(self.counters)
        self.counters = dict.fromkeys(self.COUNTER_KEYS, 0)
        return snapshot

    def _noised(self, slots: np.ndarray) -> np.ndarray:
        if self.params.noise_sigma == 0.0:
            return slots
        factor = 1.0 + self.params.noise_sigma * self._rng.standard_normal(slots.shape)
        return slots * factor

    def _spend(self, level: int, cost: int, op: str) -> int:
        remaining = level - cost
        if remaining < self.params.log_delta:
            raise NeedsBootstrap(
                f"{op} needs {cost + self.params.log_delta} bits but only {level} remain"
            )
        return remaining

    # -- encryption boundary -------------------------------------------------

    def enc(self, message) -> SimCiphertext:
        """Encrypt a vector of at most N/2 values, zero-padded to N/2."""
        m = np.asarray(message, dtype=np.complex128).ravel()
        if m.shape[0] > self.params.slots:
            raise ValueError(f"message has {m.shape[0]} slots, maximum is {self.params.slots}")
        slots = np.zeros(self.params.slots, dtype=np.complex128)
        slots[: m.shape[0]] = m
        self.counters["enc"] += 1
        return SimCiphertext(
            slots=self._noised(slots),
            level_bits=self.params.log_q,
            scale_bits=self.params.log_delta,
        )

    def dec(self, ct: SimCiphertext) -> np.ndarray:
        self.counters["dec"] += 1
        return np.array(ct.slots, copy=True)

    # -- arithmetic ----------------------------------------------------------

    def add(self, a: SimCiphertext, b: SimCiphertext) -> SimCiphertext:
        if a.scale_bits != b.scale_bits:
            raise ValueError(f"scale mismatch: {a.scale_bits} vs {b.scale_bits}")
        self.counters["add"] += 1
        return SimCiphertext(
            slots=self._noised(a.slots + b.slots),
            level_bits=min(a.level_bits, b.level_bits),
            scale_bits=a.scale_bits,
            boot_count=max(a.boot_count, b.boot_count),
        )

    def cadd(self, a: SimCiphertext, const) -> SimCiphertext:
        self.counters["cadd"] += 1
        return SimCiphertext(
            slots=self._noised(a.slots + self._const_vector(const)),
            level_bits=a.level_bits,
            scale_bits=a.scale_bits,
            boot_count=a.boot_count,
        )

    def mul(self, a: SimCiphertext, b: SimCiphertext) -> SimCiphertext:
        """Slotwise product, rescaled: costs log_delta bits of level."""
        level = self._spend(min(a.level_bits, b.level_bits), self.params.log_delta, "mul")
        self.counters["mul"] += 1
        return SimCiphertext(
            slots=self._noised(a.slots * b.slots),
            level_bits=level,
            scale_bits=a.scale_bits + b.scale_bits - self.params.log_delta,
            boot_count=max(a.boot_count, b.boot_count),
        )

    def cmul(self, a: SimCiphertext, const) -> SimCiphertext:
        """Product with a public constant: costs log_delta_c bits."""
        level = self._spend(a.level_bits, self.params.log_delta_c, "cmul")
        self.counters["cmul"] += 1
        return SimCiphertext(
            slots=self._noised(a.slots * self._const_vector(const)),
            level_bits=level,
            scale_bits=a.scale_bits,
            boot_count=a.boot_count,
        )

    def imul(self, a: SimCiphertext) -> SimCiphertext:
        """Multiply by the imaginary unit; exact and free of level cost."""
        self.counters["imul"] += 1
        return SimCiphertext(
            slots=self._noised(a.slots * 1j),
            level_bits=a.level_bits,
            scale_bits=a.scale_bits,
            boot_count=a.boot_count,
        )

    def rotate(self, a: SimCiphertext, k: int) -> SimCiphertext:
        """Cyclic left rotation by k slots (negative k rotates right)."""
        self.counters["rotate"] += 1
        return SimCiphertext(
            slots=self._noised(np.roll(a.slots, -k)),
            level_bits=a.level_bits,
            scale_bits=a.scale_bits,
            boot_count=a.boot_count,
        )

    def bootstrap(self, ct: SimCiphertext) -> SimCiphertext:
        """Refresh the budget to log_q; slots are carried over unchanged."""
        self.counters["bootstrap"] += 1
        return SimCiphertext(
            slots=self._noised(np.array(ct.slots, copy=True)),
            level_bits=self.params.log_q,
            scale_bits=ct.scale_bits,
            boot_count=ct.boot_count + 1,
        )

    # -- structured reductions -----------------------------------------------

    def sum_col_vec(self, a: SimCiphertext, layout: "BlockLayout") -> SimCiphertext:
        """Per-row sums of a packed m x g block, replicated across each row.

        Rotate-and-add halving produces the correct sum only at each row's
        first slot (other slots mix neighbouring rows), so a row-start mask
        is applied before replicating back across the row.  Costs one cmul;
        rotations and additions are free.
        """
        m, g = layout.m, layout.g
        if m * g != self.params.slots:
            raise ValueError(f"layout {m}x{g} does not fill {self.params.slots} slots")
        if g == 1:
            return a
        acc = a
        step = 1
        while step < g:
            acc = self.add(acc, self.rotate(acc, step))
            step *= 2
        mask = np.zeros(self.params.slots)
        mask[::g] = 1.0
        acc = self.cmul(acc, mask)
        step = 1
        while step < g:
            acc = self.add(acc, self.rotate(acc, -step))
            step *= 2
        return acc

    def sum_rows(self, a: SimCiphertext, layout: "BlockLayout") -> SimCiphertext:
        """Per-column sums over all m rows of a packed block.

        Summing over the full cyclic row dimension needs no mask: every
        row of the result holds the column totals, already replicated.
        """
        m, g = layout.m, layout.g
        if m * g != self.params.slots:
            raise ValueError(f"layout {m}x{g} does not fill {self.params.slots} slots")
        acc = a
        step = g
        while step < m * g:
            acc = self.add(acc, self.rotate(acc, step))
            step *= 2
        return acc

    # -- helpers ---------------------------------------------------------------

    def _const_vector(self, const) -> np.ndarray:
        c = np.asarray(const, dtype=np.complex128)
        if c.ndim == 0:
            return c
        if c.shape != (self.params.slots,):
            raise ValueError(f"constant vector has shape {c.shape}, expected ({self.params.slots},)")
        return c
