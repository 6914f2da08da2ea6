import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stratasg import wtt
from stratasg.wtt import DELTA, PITCHSTAR, hs_exact

trees = st.recursive(st.integers(0, 6),
                     lambda sub: st.tuples(sub, sub, sub), max_leaves=12)


def hs_brute(t, y0):
    """Enumerate leaf types: a weight-m leaf is unfit when all of its m
    lines are; the root of (l, m, r) is unfit iff l is and (m or r) is."""
    lv = wtt.leaves(t)
    total = 0.0
    for bits in itertools.product((0, 1), repeat=len(lv)):
        prob = 1.0
        for b, (_, w) in zip(bits, lv):
            q = y0 ** w
            prob *= q if b else 1 - q
        typed = dict(zip((p for p, _ in lv), bits))

        def typ(x, path):
            if wtt.is_leaf(x):
                return typed[path]
            return typ(x[0], path + (0,)) and (typ(x[1], path + (1,)) or typ(x[2], path + (2,)))
        total += prob * typ(t, ())
    return total


def test_examples():
    assert hs_exact(0, 0.3) == 1.0
    assert hs_exact(DELTA, 0.3) == 0.0
    assert hs_exact(PITCHSTAR, 0.5) == pytest.approx(0.75)
    assert hs_exact(wtt.root(3), 0.5) == pytest.approx(0.125)


@pytest.mark.parametrize("text", ["0", "7", "(0 1 1)", "((1 1 2) (3 9 7) (4 1 (0 1 2)))", "D"])
def test_text_round_trip(text):
    t = wtt.parse_wtt(text)
    assert wtt.parse_wtt(wtt.format_wtt(t)) == t
    assert wtt.from_codes(wtt.to_codes(t)) == t


@pytest.mark.parametrize("bad", ["(1 2)", "(1 2 3", "1 2", "(D 1 1)", "x"])
def test_bad_text(bad):
    with pytest.raises(ValueError):
        wtt.parse_wtt(bad)


def test_validate():
    wtt.validate(((1, 2, 3), 0, 5))
    for bad in ((1, 2), (1, -1, 1), "3"):
        with pytest.raises(ValueError):
            wtt.validate(bad)


def test_mass_and_paths():
    t = ((1, 1, 2), (3, 9, 7), (4, 1, (0, 1, 2)))
    assert wtt.mass(t) == 31
    assert wtt.n_internal(t) == 5
    assert wtt.mass(DELTA) == 0
    assert wtt.leftmost_path(t) == (0, 0)
    assert wtt.leftmost_path(t, (2, 2)) == (2, 2, 0)
    assert wtt.get_at(t, (2, 2, 2)) == 2
    assert wtt.replace_at(t, (1,), 5) == ((1, 1, 2), 5, (4, 1, (0, 1, 2)))


@given(trees, st.floats(0, 1))
@settings(max_examples=150, deadline=None)
def test_hs_matches_enumeration(t, y0):
    assert hs_exact(t, y0) == pytest.approx(hs_brute(t, y0), abs=1e-12)


@given(trees, st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=150, deadline=None)
def test_hs_monotone_and_bounded(t, a, b):
    lo, hi = min(a, b), max(a, b)
    x, y = hs_exact(t, lo), hs_exact(t, hi)
    assert 0.0 <= x <= y + 1e-15 <= 1.0 + 1e-15


@given(trees, st.floats(0.01, 1))
@settings(max_examples=100, deadline=None)
def test_log_space_agrees(t, y0):
    assert hs_exact(t, y0, log=True) == pytest.approx(hs_exact(t, y0), rel=1e-10, abs=1e-300)


def test_log_space_avoids_underflow():
    t = (2000, 1, 1)
    direct = hs_exact(t, 1e-3)
    assert direct == 0.0
    assert wtt.hs_log(t, 1e-3) == pytest.approx(2000 * math.log(1e-3) + math.log(1 - (1 - 1e-3) ** 2))


def test_deep_tree_is_iterative():
    t = 1
    for _ in range(20000):
        t = (t, 1, 1)
    assert wtt.mass(t) == 40001
    assert 0.0 <= hs_exact(t, 0.9) <= 1.0
    text = wtt.format_wtt(t)
    # tuple == recurses, so compare through the flat forms
    assert wtt.format_wtt(wtt.from_codes(wtt.to_codes(t))) == text
    assert np.array_equal(wtt.to_codes(wtt.parse_wtt(text)), wtt.to_codes(t))


def test_codes_are_preorder():
    codes = wtt.to_codes((0, 1, 1))
    assert len(codes) == 4
    assert np.array_equal(codes[1:], [0, 1, 1])
