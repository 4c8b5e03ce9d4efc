"""Bit-accurate inner loops for the LUT multiplier family.

Every public kernel has two implementations: ``*_nb`` (numba, loop form)
and ``*_np`` (vectorized numpy). The un-suffixed name dispatches on
:data:`lutna._accel.USE_NUMBA`. Both routes must agree bit for bit; the test
suite checks them against each other and against plain integer products.

Operands are signed ``int64`` codes (sign-magnitude value). Weights are the
constant operand held in the LUT; activations (``d``) drive the mux selects.
"""
from __future__ import annotations

import numpy as np

from lutna._accel import USE_NUMBA, njit

# scheme ids shared with lutcore.Scheme
TLUT, DNC_EXACT, DNC_APPROX, WALLACE, ARRAY = 0, 1, 2, 3, 4


def lut_banks(w_mag: np.ndarray) -> np.ndarray:
    """Stored products ``w * {0,1,2,3}`` for every weight, shape ``w.shape + (4,)``."""
    w_mag = np.asarray(w_mag, dtype=np.int64)
    return w_mag[..., None] * np.arange(4, dtype=np.int64)


# ---------------------------------------------------------------- scalar core


@njit(inline="always")
def _dnc_mag(bank0, bank1, bank2, bank3, d_mag, n_chunks):
    acc = 0
    for k in range(n_chunks):
        c = (d_mag >> (2 * k)) & 3
        if c == 0:
            z = bank0
        elif c == 1:
            z = bank1
        elif c == 2:
            z = bank2
        else:
            z = bank3
        acc += z << (2 * k)
    return acc


@njit(inline="always")
def _approx_mag(bank0, bank1, bank2, bank3, d_mag, data_bits, split):
    hi = d_mag >> split
    if hi != 0:
        return _dnc_mag(bank0, bank1, bank2, bank3, hi, (data_bits - split) // 2) << split
    return _dnc_mag(bank0, bank1, bank2, bank3, d_mag & ((1 << split) - 1), split // 2)


# ----------------------------------------------------------- elementwise


@njit(cache=True)
def multiply_nb(w, d, scheme, data_bits, split):
    out = np.empty(w.shape[0], np.int64)
    n_chunks = data_bits // 2
    for i in range(w.shape[0]):
        wm = abs(w[i])
        dm = abs(d[i])
        if scheme == DNC_EXACT:
            m = _dnc_mag(0, wm, wm << 1, 3 * wm, dm, n_chunks)
        elif scheme == DNC_APPROX:
            m = _approx_mag(0, wm, wm << 1, 3 * wm, dm, data_bits, split)
        else:
            m = wm * dm
        if (w[i] < 0) != (d[i] < 0):
            m = -m
        out[i] = m
    return out


def _dnc_mag_np(banks, d_mag, n_chunks):
    acc = np.zeros(d_mag.shape, np.int64)
    for k in range(n_chunks):
        c = (d_mag >> (2 * k)) & 3
        acc += np.take_along_axis(banks, c[..., None], axis=-1)[..., 0] << (2 * k)
    return acc


def approx_select_np(d_mag, split):
    """Activation as seen by the approximate datapath.

    When the MSB side is nonzero the LSB side is replaced by zeros; otherwise
    only the LSB side is kept. Feeding this through the exact D&C tree yields
    the same chunk lookups the approximate hardware performs.
    """
    hi = d_mag >> split
    return np.where(hi != 0, hi << split, d_mag & ((1 << split) - 1))


def multiply_np(w, d, scheme, data_bits, split):
    w = np.asarray(w, np.int64)
    d = np.asarray(d, np.int64)
    wm, dm = np.abs(w), np.abs(d)
    if scheme == DNC_EXACT:
        m = _dnc_mag_np(lut_banks(wm), dm, data_bits // 2)
    elif scheme == DNC_APPROX:
        m = _dnc_mag_np(lut_banks(wm), approx_select_np(dm, split), data_bits // 2)
    elif scheme == TLUT:
        m = _tlut_gather(wm, dm)
    else:
        m = wm * dm
    neg = (w < 0) != (d < 0)
    return np.where(neg, -m, m)


def _tlut_gather(wm, dm):
    row, table = tlut_table(wm, int(dm.max(initial=0)) + 1)
    return table[row, dm]


def multiply(w, d, scheme, data_bits, split=0):
    w = np.ascontiguousarray(w, dtype=np.int64)
    d = np.ascontiguousarray(d, dtype=np.int64)
    w, d = np.broadcast_arrays(w, d)
    shape = w.shape
    if USE_NUMBA:
        out = multiply_nb(np.ascontiguousarray(w).ravel(), np.ascontiguousarray(d).ravel(),
                          scheme, data_bits, split)
        return out.reshape(shape)
    return multiply_np(w, d, scheme, data_bits, split)


# ---------------------------------------------------------------- matmul


@njit(cache=True)
def effective_data_nb(X, scheme, data_bits, split):
    """Signed activation as reassembled by the chunk muxes.

    Each stored entry is ``c * |w|``, so the shift-add over looked-up entries
    equals ``|w|`` times the reassembled chunk codes of ``|d|``.
    """
    out = np.empty_like(X)
    flat_in = X.ravel()
    flat = out.ravel()
    n_chunks = data_bits // 2
    for j in range(flat_in.shape[0]):
        d = flat_in[j]
        dm = abs(d)
        if scheme == DNC_EXACT:
            e = _dnc_mag(0, 1, 2, 3, dm, n_chunks)
        elif scheme == DNC_APPROX:
            e = _approx_mag(0, 1, 2, 3, dm, data_bits, split)
        else:
            e = dm
        flat[j] = -e if d < 0 else e
    return out


@njit(cache=True)
def matmul_nb(W, X, scheme, data_bits, split):
    """``out[n, o] = sum_i mul(W[o, i], X[n, i])``; integer accumulation."""
    Xe = effective_data_nb(X, scheme, data_bits, split)
    N, I = X.shape
    O = W.shape[0]
    out = np.zeros((N, O), np.int64)
    for n in range(N):
        for o in range(O):
            acc = 0
            for i in range(I):
                acc += W[o, i] * Xe[n, i]
            out[n, o] = acc
    return out


@njit(cache=True)
def tlut_matmul_nb(row, sw, table, X):
    """T-LUT read: ``table[row[o, i], |d|]`` holds the stored product."""
    N, I = X.shape
    O = row.shape[0]
    out = np.zeros((N, O), np.int64)
    for n in range(N):
        for o in range(O):
            acc = 0
            for i in range(I):
                d = X[n, i]
                m = table[row[o, i], abs(d)]
                if (sw[o, i] < 0) != (d < 0):
                    acc -= m
                else:
                    acc += m
            out[n, o] = acc
    return out


def tlut_table(w_mag, top):
    """Distinct weight magnitudes and their product rows over ``0..top-1``."""
    uniq, inv = np.unique(np.asarray(w_mag, np.int64), return_inverse=True)
    table = uniq[:, None] * np.arange(top, dtype=np.int64)[None, :]
    return inv.reshape(np.shape(w_mag)), table


def matmul_np(W, X, scheme, data_bits, split, block=256):
    W = np.asarray(W, np.int64)
    X = np.asarray(X, np.int64)
    if scheme == TLUT:
        return _tlut_matmul_np(W, X, block)
    return effective_data_np(X, scheme, data_bits, split) @ W.T


def effective_data_np(X, scheme, data_bits, split):
    if scheme not in (DNC_EXACT, DNC_APPROX):
        return X
    dm = np.abs(X)
    if scheme == DNC_APPROX:
        dm = approx_select_np(dm, split)
    # 4:1 mux per chunk as a one-hot select over the stored multiples 0..3
    e = np.zeros_like(dm)
    for k in range(data_bits // 2):
        c = (dm >> (2 * k)) & 3
        e += np.choose(c, (0, 1, 2, 3)) << (2 * k)
    return np.sign(X) * e


def _tlut_matmul_np(W, X, block):
    dm = np.abs(X)
    inv, table = tlut_table(np.abs(W), int(dm.max(initial=0)) + 1)
    sw = np.sign(W)
    sx = np.sign(X)
    out = np.empty((X.shape[0], W.shape[0]), np.int64)
    for s in range(0, X.shape[0], block):
        d = dm[s:s + block]
        prod = table[inv[None, :, :], d[:, None, :]]
        out[s:s + block] = (prod * sw[None] * sx[s:s + block, None, :]).sum(-1)
    return out


def matmul(W, X, scheme, data_bits, split=0):
    W = np.ascontiguousarray(W, dtype=np.int64)
    X = np.ascontiguousarray(X, dtype=np.int64)
    if W.ndim != 2 or X.ndim != 2 or W.shape[1] != X.shape[1]:
        raise ValueError(f"matmul shape mismatch: W{W.shape} X{X.shape}")
    if USE_NUMBA:
        if scheme == TLUT:
            row, table = tlut_table(np.abs(W), int(np.abs(X).max(initial=0)) + 1)
            return tlut_matmul_nb(row, W, table, X)
        return matmul_nb(W, X, scheme, data_bits, split)
    return matmul_np(W, X, scheme, data_bits, split)


# ------------------------------------------------------ exhaustive checks


@njit(cache=True)
def exhaustive_exact_nb(bits, signed):
    """Mismatch count of the D&C product against ``w * d`` over all pairs."""
    n = 1 << bits
    n_chunks = bits // 2
    bad = 0
    if bits <= 12:
        for wm in range(n):
            for dm in range(n):
                m = _dnc_mag(0, wm, wm << 1, 3 * wm, dm, n_chunks)
                if not signed:
                    if m != wm * dm:
                        bad += 1
                    continue
                for sw in range(2):
                    for sd in range(2):
                        w = -wm if sw else wm
                        d = -dm if sd else dm
                        r = -m if sw != sd else m
                        if r != w * d:
                            bad += 1
        return bad
    # wide operands: evaluate the low byte's four chunk lookups once per weight
    # and reuse the partial sums for every byte position of d.
    half = bits // 2
    hn = 1 << half
    part = np.empty(hn, np.int64)
    for wm in range(n):
        for b in range(hn):
            part[b] = _dnc_mag(0, wm, wm << 1, 3 * wm, b, half // 2)
        for dh in range(hn):
            hi = part[dh] << half
            base = wm * (dh << half)
            for dl in range(hn):
                if hi + part[dl] != base + wm * dl:
                    bad += 1
    return bad


def exhaustive_exact_np(bits, signed):
    n = 1 << bits
    if bits <= 12:
        wm, dm = np.meshgrid(np.arange(n, dtype=np.int64), np.arange(n, dtype=np.int64), indexing="ij")
        wm, dm = wm.ravel(), dm.ravel()
        if not signed:
            return int((multiply_np(wm, dm, DNC_EXACT, bits, 0) != wm * dm).sum())
        bad = 0
        for sw in (1, -1):
            for sd in (1, -1):
                w, d = sw * wm, sd * dm
                bad += int((multiply_np(w, d, DNC_EXACT, bits, 0) != w * d).sum())
        return bad
    half = bits // 2
    b = np.arange(1 << half, dtype=np.int64)
    bad = 0
    for wm in range(n):
        part = _dnc_mag_np(lut_banks(np.full(b.shape, wm)), b, half // 2)
        got = (part[:, None] << half) + part[None, :]
        d = (b[:, None] << half) + b[None, :]
        bad += int((got != wm * d).sum())
    return bad


def exhaustive_exact(bits, signed=True):
    if bits % 2 or not 2 <= bits <= 16:
        raise ValueError(f"unsupported width {bits}")
    if bits > 12:
        signed = False
    f = exhaustive_exact_nb if USE_NUMBA else exhaustive_exact_np
    return int(f(bits, signed))


@njit(cache=True)
def exhaustive_approx_nb(bits, split):
    """Violation counts ``(zero_branch, abs_bound, tight_rel, half_rel)``.

    ``tight_rel`` is ``err/exact <= (2**split - 1) / (2**(split+1) - 1)``
    (attained at ``d = 2**(split+1) - 1``); ``half_rel`` is ``err/exact < 1/2``.
    """
    n = 1 << bits
    lim_num = (1 << split) - 1
    lim_den = (1 << (split + 1)) - 1
    v_zero = 0
    v_abs = 0
    v_rel = 0
    v_half = 0
    for wm in range(n):
        for dm in range(n):
            a = _approx_mag(0, wm, wm << 1, 3 * wm, dm, bits, split)
            e = wm * dm - a
            if (dm >> split) == 0:
                if e != 0:
                    v_zero += 1
            else:
                if e < 0 or e > wm * lim_num:
                    v_abs += 1
                if wm > 0 and e * lim_den > lim_num * wm * dm:
                    v_rel += 1
                if wm > 0 and 2 * e >= wm * dm:
                    v_half += 1
    return v_zero, v_abs, v_rel, v_half


def exhaustive_approx_np(bits, split):
    n = 1 << bits
    wm, dm = np.meshgrid(np.arange(n, dtype=np.int64), np.arange(n, dtype=np.int64), indexing="ij")
    a = multiply_np(wm, dm, DNC_APPROX, bits, split)
    e = wm * dm - a
    lsb_only = (dm >> split) == 0
    lim_num = (1 << split) - 1
    lim_den = (1 << (split + 1)) - 1
    v_zero = int((lsb_only & (e != 0)).sum())
    v_abs = int((~lsb_only & ((e < 0) | (e > wm * lim_num))).sum())
    big = ~lsb_only & (wm > 0)
    v_rel = int((big & (e * lim_den > lim_num * wm * dm)).sum())
    v_half = int((big & (2 * e >= wm * dm)).sum())
    return v_zero, v_abs, v_rel, v_half


def exhaustive_approx(bits, split):
    f = exhaustive_approx_nb if USE_NUMBA else exhaustive_approx_np
    return tuple(int(v) for v in f(bits, split))
