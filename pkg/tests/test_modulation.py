import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lasmimo.modulation import bits_to_symbols, pam_alphabet, symbols_to_bits


def test_4pam_levels_match_reference():
    assert pam_alphabet(4).levels.tolist() == [-3.0, -1.0, 1.0, 3.0]


def test_bpsk_levels():
    assert pam_alphabet(2).levels.tolist() == [-1.0, 1.0]


def test_8pam_levels_from_formula():
    # frozen from 2m - 1 - 8, m = 1..8
    assert pam_alphabet(8).levels.tolist() == [-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0]


@pytest.mark.parametrize("bad", [0, 1, 3, 6, 12, -4])
def test_invalid_order_rejected(bad):
    with pytest.raises(ValueError):
        pam_alphabet(bad)


@pytest.mark.parametrize("order", [2, 4, 8, 16])
def test_levels_strictly_increasing_and_symmetric(order):
    lv = pam_alphabet(order).levels
    assert np.all(np.diff(lv) == 2.0)
    assert np.allclose(lv, -lv[::-1])


@pytest.mark.parametrize("order", [2, 4, 8, 16])
def test_gray_property_adjacent_levels_differ_in_one_bit(order):
    lab = pam_alphabet(order).labels
    diffs = np.sum(lab[1:] != lab[:-1], axis=1)
    assert np.all(diffs == 1)
    # labeling is a bijection
    assert len({tuple(row) for row in lab}) == order


def test_4pam_gray_assignment():
    sset = pam_alphabet(4)
    mapping = {tuple(sset.labels[i]): sset.levels[i] for i in range(4)}
    assert mapping == {(0, 0): -3.0, (0, 1): -1.0, (1, 1): 1.0, (1, 0): 3.0}


def test_all_zero_bits_map_to_lowest_level():
    sset = pam_alphabet(4)
    out = bits_to_symbols(np.zeros(20, dtype=int), sset)
    assert np.all(out == -3.0)


def test_bpsk_convention():
    sset = pam_alphabet(2)
    assert bits_to_symbols(np.array([0]), sset)[0] == -1.0
    assert bits_to_symbols(np.array([1]), sset)[0] == 1.0


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        bits_to_symbols(np.array([0, 1, 0]), pam_alphabet(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3).map(lambda e: 2 ** e),
       st.lists(st.integers(0, 1), min_size=12, max_size=60))
def test_bit_symbol_round_trip(order, bits):
    sset = pam_alphabet(order)
    bits = np.array(bits[: (len(bits) // sset.bits_per_symbol) * sset.bits_per_symbol])
    if bits.size == 0:
        return
    assert np.array_equal(symbols_to_bits(bits_to_symbols(bits, sset), sset), bits)


def test_round_trip_many_random_vectors(rng):
    sset = pam_alphabet(4)
    bits = rng.integers(0, 2, size=(200, 50 * sset.bits_per_symbol))
    for b in bits:
        assert np.array_equal(symbols_to_bits(bits_to_symbols(b, sset), sset), b)


def test_quantize_nearest_and_tie_to_smaller():
    sset = pam_alphabet(4)
    vals = np.array([-10.0, -2.1, -2.0, -1.9, 0.0, 0.01, 2.0, 2.5, 99.0])
    out = sset.quantize(vals)
    #                         ties at -2, 0, 2 resolve downward
    assert out.tolist() == [-3.0, -3.0, -3.0, -1.0, -1.0, 1.0, 1.0, 3.0, 3.0]


def test_forced_bit_levels_consistent():
    sset = pam_alphabet(4)
    for m in range(4):
        for j in range(2):
            plus = sset.forced_plus[m, j]
            minus = sset.forced_minus[m, j]
            ip = int(np.where(sset.levels == plus)[0][0])
            im = int(np.where(sset.levels == minus)[0][0])
            assert sset.labels[ip, j] == 1 and sset.labels[im, j] == 0
            other = [jj for jj in range(2) if jj != j]
            assert np.all(sset.labels[ip][other] == sset.labels[m][other])
            assert np.all(sset.labels[im][other] == sset.labels[m][other])
            assert plus != minus


def test_membership_check():
    sset = pam_alphabet(4)
    assert sset.contains(np.array([-3.0, 1.0]))
    assert not sset.contains(np.array([0.0]))
    with pytest.raises(ValueError):
        sset.indices_of(np.array([2.0]))
