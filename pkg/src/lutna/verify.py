"""Exhaustive multiplier checks against the integer product."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lutna import gates, kernels
from lutna.lutcore import MultiplierConfig, Scheme

EXACT_SCHEMES = (Scheme.DNC_EXACT, Scheme.TLUT, Scheme.WALLACE, Scheme.ARRAY)
NETLIST_MAX_BITS = 8


@dataclass(frozen=True)
class CheckResult:
    label: str
    cases: int
    failures: int
    detail: str = ""


def _sign_cases(bits: int) -> int:
    return (1 << bits) ** 2 * 4


def check_exact(scheme: Scheme, bits: int) -> CheckResult:
    """All magnitude pairs and all four sign combinations (magnitudes only at 16 bits)."""
    cfg = MultiplierConfig(scheme, bits, bits)
    signed = bits < 16
    cases = _sign_cases(bits) if signed else (1 << bits) ** 2
    if scheme is Scheme.DNC_EXACT:
        bad = kernels.exhaustive_exact(bits, signed)
    elif scheme is Scheme.TLUT:
        bad = _check_tlut(bits, signed)
    else:
        if bits > NETLIST_MAX_BITS:
            raise ValueError(f"gate-level simulation is limited to {NETLIST_MAX_BITS} bits")
        bad = _check_netlist(scheme, bits)
    return CheckResult(cfg.label, cases, int(bad))


def _check_tlut(bits: int, signed: bool) -> int:
    if bits > NETLIST_MAX_BITS:
        raise ValueError(f"a full T-LUT table is limited to {NETLIST_MAX_BITS} bits here")
    v = np.arange(1 << bits, dtype=np.int64)
    if signed:
        v = np.concatenate([v, -v])
    # one weight per output row, one data word per sample
    got = kernels.matmul(v[:, None], v[:, None], kernels.TLUT, bits)
    return int((got != np.outer(v, v)).sum())


def _check_netlist(scheme: Scheme, bits: int) -> int:
    build = gates.array_multiplier if scheme is Scheme.ARRAY else gates.wallace_multiplier
    net, out = build(bits)
    a, b = np.meshgrid(np.arange(1 << bits), np.arange(1 << bits), indexing="ij")
    a, b = a.ravel(), b.ravel()
    mag = net.read(net.simulate({"a": a, "b": b}), out)
    bad = 0
    for sa in (1, -1):
        for sb in (1, -1):
            # sign path is a single XOR gate
            sign = np.where((sa < 0) ^ (sb < 0), -1, 1)
            bad += int((sign * mag != (sa * a) * (sb * b)).sum())
    return bad


def check_approx(bits: int, split: int | None = None) -> CheckResult:
    """Error bounds of the approximate multiplier over all magnitude pairs."""
    cfg = MultiplierConfig(Scheme.DNC_APPROX, bits, bits, split)
    v_zero, v_abs, v_tight, v_half = kernels.exhaustive_approx(bits, cfg.split)
    detail = f"zero_msb={v_zero} abs_bound={v_abs} rel_tight={v_tight} rel_half={v_half}"
    return CheckResult(cfg.label, (1 << bits) ** 2, v_zero + v_abs + v_tight + v_half, detail)


def default_exact_schemes(bits: int) -> tuple[Scheme, ...]:
    return EXACT_SCHEMES if bits <= NETLIST_MAX_BITS else (Scheme.DNC_EXACT,)
