"""LUT multiplier models: banks, D&C exact/approximate multiply, T-LUT, MAC.

The scalar functions here operate on :class:`SignMagWord` and an explicit
:class:`LutBank`; they are the readable reference. Array work (layers,
exhaustive sweeps) goes through :mod:`lutna.kernels`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lutna import kernels
from lutna.fixedpoint import SignMagWord

CHUNK_BITS = 2
SUPPORTED_WIDTHS = (2, 4, 8, 16)


class WidthError(ValueError):
    pass


class Scheme(enum.IntEnum):
    TLUT = kernels.TLUT
    DNC_EXACT = kernels.DNC_EXACT
    DNC_APPROX = kernels.DNC_APPROX
    WALLACE = kernels.WALLACE
    ARRAY = kernels.ARRAY

    @property
    def slug(self) -> str:
        return _SLUGS[self]

    @property
    def is_dnc(self) -> bool:
        return self in (Scheme.DNC_EXACT, Scheme.DNC_APPROX)


_SLUGS = {
    Scheme.TLUT: "tlut",
    Scheme.DNC_EXACT: "dnc-exact",
    Scheme.DNC_APPROX: "dnc-approx",
    Scheme.WALLACE: "wallace",
    Scheme.ARRAY: "array",
}
_BY_SLUG = {v: k for k, v in _SLUGS.items()}


@dataclass(frozen=True)
class MultiplierConfig:
    scheme: Scheme
    data_bits: int = 8
    weight_bits: int = 8
    approx_split: int | None = None
    storage_optimized: bool = True
    chunk_bits: int = field(default=CHUNK_BITS)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.data_bits not in SUPPORTED_WIDTHS or self.weight_bits not in SUPPORTED_WIDTHS:
            raise WidthError(
                f"data_bits/weight_bits must be in {SUPPORTED_WIDTHS}, got {self.data_bits}/{self.weight_bits}"
            )
        if self.chunk_bits != CHUNK_BITS:
            raise WidthError("only 2-bit chunks are modeled")
        if self.scheme is Scheme.DNC_APPROX:
            split = self.data_bits // 2 if self.approx_split is None else self.approx_split
            if not (0 < split < self.data_bits) or split % 2:
                raise WidthError(f"approx_split must be even and in (0, {self.data_bits}), got {split}")
            object.__setattr__(self, "approx_split", split)
        elif self.approx_split is not None:
            raise WidthError("approx_split only applies to dnc-approx")

    @property
    def split(self) -> int:
        return self.approx_split or 0

    @property
    def label(self) -> str:
        base = self.scheme.slug
        if self.scheme is Scheme.DNC_EXACT and not self.storage_optimized:
            base += "-unopt"
        width = f"{self.data_bits}" if self.data_bits == self.weight_bits else f"{self.data_bits}x{self.weight_bits}"
        s = f"{base}-{width}"
        if self.scheme is Scheme.DNC_APPROX and self.split != self.data_bits // 2:
            s += f"s{self.split}"
        return s

    def with_scheme(self, scheme: Scheme) -> "MultiplierConfig":
        return MultiplierConfig(Scheme(scheme), self.data_bits, self.weight_bits)


def parse_config(text: str) -> MultiplierConfig:
    """Parse labels such as ``dnc-exact-4``, ``tlut-8x4``, ``dnc-approx-8s2``."""
    text = text.strip().lower()
    head, _, width = text.rpartition("-")
    optimized = True
    if head.endswith("-unopt"):
        head, optimized = head[: -len("-unopt")], False
    if head not in _BY_SLUG or not width:
        raise ValueError(f"unknown multiplier config {text!r}")
    split = None
    if "s" in width:
        width, split_s = width.split("s", 1)
        split = int(split_s)
    d, _, w = width.partition("x")
    try:
        data_bits = int(d)
        weight_bits = int(w) if w else data_bits
    except ValueError:
        raise ValueError(f"bad width in multiplier config {text!r}") from None
    return MultiplierConfig(_BY_SLUG[head], data_bits, weight_bits, split, optimized)


@dataclass(frozen=True)
class LutBank:
    """Products of one constant weight with every 2-bit chunk value."""

    weight_mag: int
    n_w: int
    entries: tuple[int, int, int, int]
    stored_cells: tuple[int, int, int, int]
    chunk_bits: int = CHUNK_BITS

    @property
    def total_stored_cells(self) -> int:
        return sum(self.stored_cells)

    @property
    def entry_bits(self) -> int:
        return self.n_w + self.chunk_bits


def build_lut_bank(weight_mag: int, n_w: int) -> LutBank:
    """Build the 4-entry bank for ``weight_mag``.

    Cells per entry after storage optimization: ``w*0`` is hard-wired zero,
    ``w*1`` stores ``n_w`` bits, ``w*2`` is the ``w*1`` wires shifted by one,
    ``w*3`` stores its top ``n_w + 1`` bits (its LSB is the LSB of ``w``).
    """
    if not (1 <= n_w <= 16):
        raise WidthError(f"weight width {n_w} out of range")
    if not (0 <= weight_mag < (1 << n_w)):
        raise WidthError(f"weight magnitude {weight_mag} does not fit in {n_w} bits")
    entries = tuple(weight_mag * j for j in range(4))
    return LutBank(weight_mag, n_w, entries, (0, n_w, 0, n_w + 1))


def lut_chunk_multiply(bank: LutBank, chunk: int) -> int:
    """4:1 mux read of the bank."""
    if not (0 <= chunk < 4):
        raise ValueError(f"chunk {chunk} is not a 2-bit value")
    return bank.entries[chunk]


def _check_operands(w: SignMagWord, d: SignMagWord, cfg: MultiplierConfig) -> None:
    if w.mag >= (1 << cfg.weight_bits):
        raise WidthError(f"weight magnitude {w.mag} exceeds {cfg.weight_bits} bits")
    if d.mag >= (1 << cfg.data_bits):
        raise WidthError(f"data magnitude {d.mag} exceeds {cfg.data_bits} bits")


def _dnc_magnitude(bank: LutBank, d_mag: int, width: int) -> int:
    acc = 0
    for k in range(width // CHUNK_BITS):
        chunk = (d_mag >> (CHUNK_BITS * k)) & 0b11
        acc += lut_chunk_multiply(bank, chunk) << (CHUNK_BITS * k)
    return acc


def _signed(sign: int, mag: int) -> int:
    return -mag if (sign and mag) else mag


def dnc_multiply_exact(w: SignMagWord, d: SignMagWord, cfg: MultiplierConfig) -> int:
    if cfg.scheme is not Scheme.DNC_EXACT:
        raise ValueError(f"config scheme is {cfg.scheme.slug}, expected dnc-exact")
    _check_operands(w, d, cfg)
    bank = build_lut_bank(w.mag, cfg.weight_bits)
    return _signed(w.sign ^ d.sign, _dnc_magnitude(bank, d.mag, cfg.data_bits))


def dnc_multiply_approx(w: SignMagWord, d: SignMagWord, cfg: MultiplierConfig) -> int:
    """MSB-side product with the LSB side fixed to zero, or the LSB-side product alone."""
    if cfg.scheme is not Scheme.DNC_APPROX:
        raise ValueError(f"config scheme is {cfg.scheme.slug}, expected dnc-approx")
    _check_operands(w, d, cfg)
    s = cfg.split
    bank = build_lut_bank(w.mag, cfg.weight_bits)
    d_hi = d.mag >> s
    if d_hi:
        mag = _dnc_magnitude(bank, d_hi, cfg.data_bits - s) << s
    else:
        mag = _dnc_magnitude(bank, d.mag & ((1 << s) - 1), s)
    return _signed(w.sign ^ d.sign, mag)


def tlut_multiply(w: SignMagWord, d: SignMagWord, cfg: MultiplierConfig) -> int:
    """Read one entry of the ``2**data_bits``-entry table for constant ``w``."""
    if cfg.scheme is not Scheme.TLUT:
        raise ValueError(f"config scheme is {cfg.scheme.slug}, expected tlut")
    _check_operands(w, d, cfg)
    table = _tlut_row(w.mag, cfg.data_bits)
    return _signed(w.sign ^ d.sign, int(table[d.mag]))


def _tlut_row(w_mag: int, data_bits: int) -> np.ndarray:
    return w_mag * np.arange(1 << data_bits, dtype=np.int64)


def digital_multiply(w: SignMagWord, d: SignMagWord, cfg: MultiplierConfig) -> int:
    if cfg.scheme not in (Scheme.WALLACE, Scheme.ARRAY):
        raise ValueError(f"config scheme is {cfg.scheme.slug}, expected a digital multiplier")
    _check_operands(w, d, cfg)
    return _signed(w.sign ^ d.sign, w.mag * d.mag)


_DISPATCH = {
    Scheme.DNC_EXACT: dnc_multiply_exact,
    Scheme.DNC_APPROX: dnc_multiply_approx,
    Scheme.TLUT: tlut_multiply,
    Scheme.WALLACE: digital_multiply,
    Scheme.ARRAY: digital_multiply,
}


def multiply(w: SignMagWord, d: SignMagWord, cfg: MultiplierConfig) -> int:
    return _DISPATCH[cfg.scheme](w, d, cfg)


def accumulator_bits(cfg: MultiplierConfig, length: int) -> int:
    """Accumulator width that cannot overflow for ``length`` signed products."""
    return cfg.data_bits + cfg.weight_bits + 2 + (math.ceil(math.log2(length)) if length > 1 else 0)


def dot_product(w: Sequence[SignMagWord], d: Sequence[SignMagWord], cfg: MultiplierConfig) -> int:
    if len(w) != len(d):
        raise ValueError(f"length mismatch: {len(w)} weights vs {len(d)} activations")
    acc = 0
    for wi, di in zip(w, d):
        acc += multiply(wi, di, cfg)
    return acc


def multiply_array(w, d, cfg: MultiplierConfig) -> np.ndarray:
    """Elementwise product of signed code arrays under ``cfg``."""
    w = np.asarray(w, np.int64)
    d = np.asarray(d, np.int64)
    if w.size and np.abs(w).max() >= (1 << cfg.weight_bits):
        raise WidthError(f"weight codes exceed {cfg.weight_bits} bits")
    if d.size and np.abs(d).max() >= (1 << cfg.data_bits):
        raise WidthError(f"data codes exceed {cfg.data_bits} bits")
    return kernels.multiply(w, d, int(cfg.scheme), cfg.data_bits, cfg.split)


def matmul(W, X, cfg: MultiplierConfig) -> np.ndarray:
    """``X @ W.T`` with every product taken through ``cfg``'s multiplier."""
    W = np.asarray(W, np.int64)
    X = np.asarray(X, np.int64)
    if W.size and np.abs(W).max() >= (1 << cfg.weight_bits):
        raise WidthError(f"weight codes exceed {cfg.weight_bits} bits")
    if X.size and np.abs(X).max() >= (1 << cfg.data_bits):
        raise WidthError(f"data codes exceed {cfg.data_bits} bits")
    return kernels.matmul(W, X, int(cfg.scheme), cfg.data_bits, cfg.split)
