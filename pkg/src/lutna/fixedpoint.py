"""Sign-magnitude fixed point words and symmetric per-tensor quantization.

Arrays of codes are carried as signed ``int64`` where the value is
``(-1)**sign * mag``; this is lossless for sign-magnitude because negative
zero is normalized away.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_BITS = 1
MAX_BITS = 16


class NonFiniteInputError(ValueError):
    """Raised when a quantizer sees NaN (or non-finite calibration data)."""

    def __init__(self, detail: str = ""):
        super().__init__("non-finite input" + (f": {detail}" if detail else ""))


def _check_bits(n_bits: int) -> None:
    if not (MIN_BITS <= int(n_bits) <= MAX_BITS):
        raise ValueError(f"n_bits must be in [{MIN_BITS}, {MAX_BITS}], got {n_bits}")


@dataclass(frozen=True)
class SignMagWord:
    sign: int
    mag: int
    n_bits: int = 8

    def __post_init__(self):
        _check_bits(self.n_bits)
        if self.sign not in (0, 1):
            raise ValueError(f"sign must be 0 or 1, got {self.sign}")
        if not (0 <= self.mag < (1 << self.n_bits)):
            raise ValueError(f"magnitude {self.mag} does not fit in {self.n_bits} bits")
        if self.mag == 0 and self.sign:
            object.__setattr__(self, "sign", 0)

    @property
    def value(self) -> int:
        return -self.mag if self.sign else self.mag

    @classmethod
    def from_int(cls, v: int, n_bits: int = 8) -> "SignMagWord":
        return cls(1 if v < 0 else 0, abs(int(v)), n_bits)

    def __neg__(self) -> "SignMagWord":
        return SignMagWord(self.sign ^ 1, self.mag, self.n_bits)


@dataclass(frozen=True)
class QuantParams:
    n_bits: int
    scale: float

    def __post_init__(self):
        _check_bits(self.n_bits)
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")

    @property
    def max_code(self) -> int:
        return (1 << self.n_bits) - 1


def quantize(x: float, p: QuantParams) -> SignMagWord:
    """Quantize one real value; saturates instead of failing."""
    if math.isnan(x):
        raise NonFiniteInputError()
    mag = min(math.floor(abs(x) * p.scale + 0.5), p.max_code) if math.isfinite(x) else p.max_code
    return SignMagWord(1 if x < 0 else 0, int(mag), p.n_bits)


def dequantize(w: SignMagWord, p: QuantParams) -> float:
    return w.value / p.scale


def quantize_array(x, p: QuantParams) -> np.ndarray:
    """Vectorized :func:`quantize`, returning signed int64 codes."""
    x = np.asarray(x, dtype=np.float64)
    if np.isnan(x).any():
        raise NonFiniteInputError("array contains NaN")
    with np.errstate(invalid="ignore", over="ignore"):
        mag = np.minimum(np.floor(np.abs(x) * p.scale + 0.5), p.max_code)
    return (np.sign(x) * mag).astype(np.int64)


def dequantize_array(codes, p: QuantParams) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) / p.scale


def calibrate_scale(tensor, n_bits: int) -> QuantParams:
    """Max-abs calibration: the largest magnitude maps to the top code."""
    t = np.asarray(tensor, dtype=np.float64)
    if t.size == 0:
        raise ValueError("cannot calibrate on an empty tensor")
    if not np.isfinite(t).all():
        raise NonFiniteInputError("calibration tensor")
    _check_bits(n_bits)
    m = float(np.max(np.abs(t)))
    if m == 0.0:
        return QuantParams(n_bits, 1.0)
    return QuantParams(n_bits, ((1 << n_bits) - 1) / m)


def requantize(acc, multiplier: float, n_bits: int) -> np.ndarray:
    """Scale integer accumulators by ``multiplier`` and saturate to ``n_bits``.

    Rounding is half away from zero, same as :func:`quantize`.
    """
    top = (1 << n_bits) - 1
    v = np.asarray(acc, dtype=np.float64) * multiplier
    mag = np.minimum(np.floor(np.abs(v) + 0.5), top)
    return (np.sign(v) * mag).astype(np.int64)


def to_sign_mag(codes) -> tuple[np.ndarray, np.ndarray]:
    codes = np.asarray(codes, dtype=np.int64)
    return (codes < 0).astype(np.uint8), np.abs(codes)


def from_sign_mag(sign, mag) -> np.ndarray:
    mag = np.asarray(mag, dtype=np.int64)
    return np.where(np.asarray(sign) != 0, -mag, mag)
