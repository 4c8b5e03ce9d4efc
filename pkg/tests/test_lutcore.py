import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lutna import kernels
from lutna._accel import HAS_NUMBA
from lutna.fixedpoint import SignMagWord
from lutna.lutcore import (
    MultiplierConfig, Scheme, WidthError, accumulator_bits, build_lut_bank, dnc_multiply_approx,
    dnc_multiply_exact, dot_product, lut_chunk_multiply, matmul, multiply, multiply_array, parse_config,
    tlut_multiply,
)

W = SignMagWord.from_int
EXACT4 = MultiplierConfig(Scheme.DNC_EXACT, 4, 4)
EXACT8 = MultiplierConfig(Scheme.DNC_EXACT, 8, 8)
APPROX4 = MultiplierConfig(Scheme.DNC_APPROX, 4, 4, 2)
APPROX8 = MultiplierConfig(Scheme.DNC_APPROX, 8, 8, 4)


def ref_approx(w: int, d: int, split: int) -> int:
    """Reference rule written from the definition with plain integer math."""
    sign = -1 if (w < 0) != (d < 0) else 1
    dm, wm = abs(d), abs(w)
    hi = dm >> split
    mag = (wm * hi) << split if hi else wm * (dm % (1 << split))
    return sign * mag


def test_bank_examples():
    b = build_lut_bank(5, 4)
    assert b.entries == (0, 5, 10, 15) and b.stored_cells == (0, 4, 0, 5)
    assert build_lut_bank(0, 4).entries == (0, 0, 0, 0)
    b8 = build_lut_bank(255, 8)
    assert b8.entries == (0, 255, 510, 765) and b8.stored_cells == (0, 8, 0, 9)
    assert b8.total_stored_cells == 2 * 8 + 1
    with pytest.raises(WidthError):
        build_lut_bank(16, 4)


def test_chunk_lookup():
    assert lut_chunk_multiply(build_lut_bank(5, 4), 3) == 15
    assert lut_chunk_multiply(build_lut_bank(5, 4), 0) == 0
    assert lut_chunk_multiply(build_lut_bank(9, 4), 2) == 18


def test_exact_examples():
    assert dnc_multiply_exact(W(5, 4), W(9, 4), EXACT4) == 45
    assert dnc_multiply_exact(W(5, 4), W(-9, 4), EXACT4) == -45
    assert dnc_multiply_exact(W(200), W(170), EXACT8) == 34000


def test_approx_examples():
    assert dnc_multiply_approx(W(5, 4), W(9, 4), APPROX4) == 40
    assert dnc_multiply_approx(W(5, 4), W(3, 4), APPROX4) == 15
    got = dnc_multiply_approx(W(200), W(17), APPROX8)
    assert got == 3200
    assert (3400 - got) / 3400 == pytest.approx(0.0588, abs=1e-4)


def test_tlut_examples():
    cfg = MultiplierConfig(Scheme.TLUT, 4, 4)
    assert tlut_multiply(W(7, 4), W(13, 4), cfg) == 91
    assert tlut_multiply(W(7, 4), W(0, 4), cfg) == 0
    assert tlut_multiply(W(-7, 4), W(13, 4), cfg) == -91
    assert type(tlut_multiply(W(7, 4), W(13, 4), cfg)) is int


def test_dot_product_examples():
    w, d = [W(5, 4), W(3, 4)], [W(9, 4), W(2, 4)]
    assert dot_product(w, d, EXACT4) == 51
    assert dot_product(w, d, APPROX4) == 46
    assert dot_product([], [], EXACT4) == 0
    with pytest.raises(ValueError):
        dot_product(w, d[:1], EXACT4)


def test_config_validation_and_labels():
    with pytest.raises(WidthError):
        MultiplierConfig(Scheme.DNC_EXACT, 6, 8)
    with pytest.raises(WidthError):
        MultiplierConfig(Scheme.DNC_APPROX, 8, 8, 3)
    with pytest.raises(WidthError):
        MultiplierConfig(Scheme.DNC_APPROX, 8, 8, 8)
    with pytest.raises(WidthError):
        MultiplierConfig(Scheme.DNC_EXACT, 8, 8, 4)
    assert MultiplierConfig(Scheme.DNC_APPROX, 8, 8).split == 4
    for label in ("dnc-exact-4", "dnc-exact-unopt-4", "tlut-8x4", "dnc-approx-8s2", "wallace-16", "array-2"):
        assert parse_config(label).label == label
    with pytest.raises(ValueError):
        parse_config("booth-8")


def test_width_overflow_is_an_error():
    with pytest.raises(WidthError):
        dnc_multiply_exact(W(16, 5), W(1, 4), EXACT4)
    with pytest.raises(WidthError):
        matmul([[300]], [[1]], EXACT8)
    with pytest.raises(ValueError):
        dnc_multiply_exact(W(1), W(1), APPROX8)


def test_accumulator_width_holds_worst_case():
    n = 1000
    bits = accumulator_bits(EXACT8, n)
    assert n * 255 * 255 < 2 ** (bits - 1)


def test_exhaustive_exact_4b_against_integer_product():
    wm, dm = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    for sw in (1, -1):
        for sd in (1, -1):
            got = multiply_array(sw * wm, sd * dm, EXACT4)
            assert (got == (sw * wm) * (sd * dm)).all()


def test_exhaustive_approx_4b_against_reference():
    for split, cfg in ((2, APPROX4),):
        for w in range(-15, 16):
            for d in range(-15, 16):
                assert dnc_multiply_approx(W(w, 4), W(d, 4), cfg) == ref_approx(w, d, split)


def test_approx_8b_vectorized_against_reference():
    wm, dm = np.meshgrid(np.arange(256), np.arange(256), indexing="ij")
    for split in (2, 4, 6):
        cfg = MultiplierConfig(Scheme.DNC_APPROX, 8, 8, split)
        got = multiply_array(wm, dm, cfg)
        ref = np.vectorize(ref_approx)(wm, dm, split)
        assert (got == ref).all()


ALL = [MultiplierConfig(s, 8, 8) for s in Scheme]


@settings(max_examples=300)
@given(st.integers(-255, 255), st.integers(-255, 255))
def test_sign_and_zero_properties(w, d):
    for cfg in ALL:
        m = multiply(W(w), W(d), cfg)
        assert multiply(W(-w), W(d), cfg) == -m
        assert multiply(W(w), W(-d), cfg) == -m
        if w == 0 or d == 0:
            assert m == 0
    assert multiply(W(w), W(d), MultiplierConfig(Scheme.TLUT)) == multiply(W(w), W(d), EXACT8) == w * d


@settings(max_examples=200)
@given(st.integers(0, 255), st.integers(0, 255), st.sampled_from([2, 4, 6]))
def test_approx_error_bounds(w, d, split):
    cfg = MultiplierConfig(Scheme.DNC_APPROX, 8, 8, split)
    err = w * d - dnc_multiply_approx(W(w), W(d), cfg)
    assert 0 <= err <= w * ((1 << split) - 1)
    if d < (1 << split):
        assert err == 0
    elif w:
        rel = err / (w * d)
        assert rel <= ((1 << split) - 1) / ((1 << (split + 1)) - 1)
        assert rel < 0.5


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(-255, 255), st.integers(-255, 255)), max_size=30))
def test_dot_product_is_order_independent(pairs):
    w = [W(a) for a, _ in pairs]
    d = [W(b) for _, b in pairs]
    ref = sum(a * b for a, b in pairs)
    assert dot_product(w, d, EXACT8) == ref == dot_product(w[::-1], d[::-1], EXACT8)


@pytest.mark.parametrize("scheme", list(Scheme))
def test_matmul_matches_elementwise(scheme):
    rng = np.random.default_rng(1)
    Wm = rng.integers(-255, 256, size=(5, 7))
    X = rng.integers(-255, 256, size=(4, 7))
    cfg = MultiplierConfig(scheme, 8, 8)
    ref = np.array([[sum(multiply(W(int(Wm[o, i])), W(int(X[n, i])), cfg) for i in range(7)) for o in range(5)]
                    for n in range(4)])
    assert (matmul(Wm, X, cfg) == ref).all()


@pytest.mark.parametrize("scheme", list(Scheme))
@pytest.mark.parametrize("bits", [4, 8, 16])
def test_numba_and_numpy_routes_agree(scheme, bits):
    rng = np.random.default_rng(bits)
    top = (1 << bits) - 1
    Wm = rng.integers(-top, top + 1, size=(6, 9))
    X = rng.integers(-top, top + 1, size=(11, 9))
    split = bits // 2 if scheme == Scheme.DNC_APPROX else 0
    a = kernels.matmul_np(Wm, X, int(scheme), bits, split)
    if HAS_NUMBA:
        if scheme == Scheme.TLUT:
            row, table = kernels.tlut_table(np.abs(Wm), int(np.abs(X).max()) + 1)
            b = kernels.tlut_matmul_nb(row, np.sign(Wm), table, X)
        else:
            b = kernels.matmul_nb(Wm, X, int(scheme), bits, split)
        assert (a == b).all()
    assert (kernels.multiply_np(Wm[0], X[0], int(scheme), bits, split)
            == kernels.multiply(Wm[0], X[0], int(scheme), bits, split)).all()


def test_exhaustive_routes_agree_at_4b():
    assert kernels.exhaustive_exact_np(4, True) == 0
    assert kernels.exhaustive_approx_np(4, 2) == (0, 0, 0, 0)
    if HAS_NUMBA:
        assert kernels.exhaustive_exact_nb(4, True) == 0
