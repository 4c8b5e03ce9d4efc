"""Tiny gate-level netlists for the multipliers the cost model counts.

Component counts for the digital baselines and for the D&C shift-add chain
are read off a constructed netlist instead of a closed form, and the same
netlist can be simulated to prove it actually multiplies. ``None`` stands
for a hard-wired zero; gates with a constant-zero operand are folded away
except for muxes (a mux selecting between data and ground is still a mux).
"""
from __future__ import annotations

from collections import Counter

import numpy as np


class Netlist:
    def __init__(self):
        self.n_wires = 0
        self.gates: list[tuple] = []
        self.inputs: dict[str, list[int]] = {}

    def _wire(self) -> int:
        self.n_wires += 1
        return self.n_wires - 1

    def input(self, name: str, width: int) -> list[int]:
        bits = [self._wire() for _ in range(width)]
        self.inputs[name] = bits
        return bits

    def and_(self, a, b):
        if a is None or b is None:
            return None
        out = self._wire()
        self.gates.append(("and", a, b, out))
        return out

    def xor(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        out = self._wire()
        self.gates.append(("xor", a, b, out))
        return out

    def mux(self, sel, a, b):
        """``b`` when ``sel`` is 1, else ``a``."""
        if a is None and b is None:
            return None
        out = self._wire()
        self.gates.append(("mux", sel, a, b, out))
        return out

    def ha(self, a, b):
        s, c = self._wire(), self._wire()
        self.gates.append(("ha", a, b, s, c))
        return s, c

    def fa(self, a, b, cin):
        s, c = self._wire(), self._wire()
        self.gates.append(("fa", a, b, cin, s, c))
        return s, c

    def counts(self) -> Counter:
        return Counter(g[0] for g in self.gates)

    def simulate(self, values: dict[str, np.ndarray]) -> np.ndarray:
        n = len(next(iter(values.values())))
        wires = np.zeros((self.n_wires, n), dtype=bool)
        for name, bits in self.inputs.items():
            v = np.asarray(values[name], dtype=np.int64)
            for i, w in enumerate(bits):
                wires[w] = (v >> i) & 1
        zero = np.zeros(n, dtype=bool)

        def val(w):
            return zero if w is None else wires[w]

        for g in self.gates:
            kind = g[0]
            if kind == "and":
                wires[g[3]] = val(g[1]) & val(g[2])
            elif kind == "xor":
                wires[g[3]] = val(g[1]) ^ val(g[2])
            elif kind == "mux":
                wires[g[4]] = np.where(val(g[1]), val(g[3]), val(g[2]))
            elif kind == "ha":
                a, b = val(g[1]), val(g[2])
                wires[g[3]], wires[g[4]] = a ^ b, a & b
            else:
                a, b, c = val(g[1]), val(g[2]), val(g[3])
                wires[g[4]] = a ^ b ^ c
                wires[g[5]] = (a & b) | (c & (a ^ b))
        return wires

    def read(self, wires: np.ndarray, bits: list) -> np.ndarray:
        out = np.zeros(wires.shape[1], dtype=np.int64)
        for i, w in enumerate(bits):
            if w is not None:
                out |= wires[w].astype(np.int64) << i
        return out


def ripple_add(net: Netlist, a: list, b: list) -> list:
    """Ripple-carry add of two little-endian bit vectors (``None`` = 0).

    Columns with two live bits and no carry get a half adder, three get a full
    adder, one live bit plus a carry gets a half adder. The final carry is
    kept as the top output bit.
    """
    width = max(len(a), len(b))
    out = []
    carry = None
    for i in range(width):
        live = [x for x in (a[i] if i < len(a) else None, b[i] if i < len(b) else None, carry) if x is not None]
        if len(live) == 3:
            s, carry = net.fa(*live)
        elif len(live) == 2:
            s, carry = net.ha(*live)
        else:
            s, carry = (live[0] if live else None), None
        out.append(s)
    if carry is not None:
        out.append(carry)
    return out


def shift_add_chain(net: Netlist, partials: list[list], shift: int) -> list:
    """Sum ``partials[k] << (shift*k)`` sequentially from the LSB side."""
    acc = list(partials[0])
    for k in range(1, len(partials)):
        shifted = [None] * (shift * k) + list(partials[k])
        acc = ripple_add(net, acc, shifted)
    return acc


def partial_products(net: Netlist, a: list, b: list) -> list[list]:
    """``pp[i][j] = a[j] & b[i]``."""
    return [[net.and_(aj, bi) for aj in a] for bi in b]


def array_multiplier(n: int):
    """Carry-save array multiplier with a ripple vector-merging row.

    Returns ``(netlist, product_bits)``. Uses ``n*n`` ANDs, ``n`` half adders
    and ``n*(n-2)`` full adders.
    """
    net = Netlist()
    a = net.input("a", n)
    b = net.input("b", n)
    pp = partial_products(net, a, b)
    if n == 1:
        return net, [pp[0][0]]
    out = [pp[0][0]]
    # row 1: half adders
    s, c = [None] * n, [None] * (n - 1)
    for j in range(n - 1):
        s[j], c[j] = net.ha(pp[1][j], pp[0][j + 1])
    s[n - 1] = pp[1][n - 1]
    out.append(s[0])
    for i in range(2, n):
        ns, nc = [None] * n, [None] * (n - 1)
        for j in range(n - 1):
            ns[j], nc[j] = net.fa(pp[i][j], s[j + 1], c[j])
        ns[n - 1] = pp[i][n - 1]
        s, c = ns, nc
        out.append(s[0])
    # vector-merging adder over the remaining sums and carries
    carry = None
    for j in range(n - 1):
        if carry is None:
            bit, carry = net.ha(s[j + 1], c[j])
        else:
            bit, carry = net.fa(s[j + 1], c[j], carry)
        out.append(bit)
    out.append(carry)
    return net, out


def wallace_multiplier(n: int):
    """Wallace tree: full adders on every triple, half adders on leftover pairs,
    per stage, until no column holds more than two bits; ripple CPA at the end."""
    net = Netlist()
    a = net.input("a", n)
    b = net.input("b", n)
    pp = partial_products(net, a, b)
    cols: list[list[int]] = [[] for _ in range(2 * n)]
    for i in range(n):
        for j in range(n):
            cols[i + j].append(pp[i][j])
    while max(len(c) for c in cols) > 2:
        new: list[list[int]] = [[] for _ in range(len(cols) + 1)]
        for w, bits in enumerate(cols):
            k = 0
            while len(bits) - k >= 3:
                s, c = net.fa(bits[k], bits[k + 1], bits[k + 2])
                new[w].append(s)
                new[w + 1].append(c)
                k += 3
            if len(bits) - k == 2:
                s, c = net.ha(bits[k], bits[k + 1])
                new[w].append(s)
                new[w + 1].append(c)
            elif len(bits) - k == 1:
                new[w].append(bits[k])
        while new and not new[-1]:
            new.pop()
        cols = new
    row0 = [c[0] if len(c) > 0 else None for c in cols]
    row1 = [c[1] if len(c) > 1 else None for c in cols]
    out = ripple_add(net, row0, row1)
    return net, out[: 2 * n]


def dnc_multiplier(n_w: int, n_d: int):
    """Unshared D&C datapath: one 4:1 mux of ``n_w+2`` bits per 2-bit chunk of
    ``d`` selecting from the storage-optimized bank, then the shift-add chain.

    The bank's stored cells are the ``w`` input (entry 1) and the top
    ``n_w + 1`` bits of ``3w`` (input ``w3hi``); entry 2 is entry 1 rewired.
    """
    net = Netlist()
    w = net.input("w", n_w)
    w3hi = net.input("w3hi", n_w + 1)
    d = net.input("d", n_d)
    e = n_w + 2
    entries = [
        [None] * e,
        w + [None, None],
        [None] + w + [None],
        [w[0]] + w3hi,
    ]
    partials = []
    for k in range(n_d // 2):
        s0, s1 = d[2 * k], d[2 * k + 1]
        z = []
        for bit in range(e):
            lo = net.mux(s0, entries[0][bit], entries[1][bit])
            hi = net.mux(s0, entries[2][bit], entries[3][bit])
            z.append(net.mux(s1, lo, hi))
        partials.append(z)
    out = shift_add_chain(net, partials, 2)
    return net, out


def adder_chain_counts(n_products: int, entry_bits: int, shift: int = 2) -> tuple[int, int]:
    """(half_adders, full_adders) of the shift-add chain over live partials."""
    if n_products <= 1:
        return 0, 0
    net = Netlist()
    partials = [net.input(f"z{k}", entry_bits) for k in range(n_products)]
    shift_add_chain(net, partials, shift)
    c = net.counts()
    return c["ha"], c["fa"]
