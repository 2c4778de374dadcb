import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutlab import contfrac as cf


def test_constant_tail_equals_limit_formula():
    c = cf.constant(1.5, 0.7)
    t = cf.tail_value(c, 1)
    assert t.value == pytest.approx(cf.limit_formula(1.5, 0.7), abs=1e-12)
    assert t.lower <= t.value <= t.upper
    # fixed point of x = beta / (alpha + x)
    assert t.value == pytest.approx(0.7 / (1.5 + t.value), abs=1e-12)


def test_limit_formula_small_beta_no_cancellation():
    v = cf.limit_formula(1.0, 1e-14)
    assert v == pytest.approx(1e-14, rel=1e-10)


def test_approximant_by_hand():
    c = cf.from_arrays([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])
    assert cf.approximant(c, 1, 3) == pytest.approx(1 / (1 + 1 / (2 + 1 / 3)))
    np.testing.assert_allclose(cf.approximants_to(c, 1, 3),
                               [1 / (1 + 1 / (2 + 1 / 3)), 1 / (2 + 1 / 3), 1 / 3])


def test_table_end_raises_and_nonpositive_rejected():
    c = cf.from_arrays([1.0, 2.0], [1.0, 1.0])
    with pytest.raises(IndexError):
        cf.tail_value(c, 1)
    with pytest.raises(ValueError):
        cf.from_arrays([1.0, 0.0], [1.0, 1.0])


def test_tail_not_converged_reports_bracket():
    # alpha_j shrinking fast: tails converge too slowly for a tiny depth cap
    c = cf.ContinuedFraction(lambda j: 1.0 / (j.astype(float) ** 2), lambda j: np.ones(len(j)))
    with pytest.raises(cf.TailNotConverged) as info:
        cf.tail_value(c, 1, depth_cap=64)
    lo, hi = info.value.bracket
    assert lo <= hi


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 5.0), min_size=3, max_size=30),
       st.lists(st.floats(0.1, 5.0), min_size=3, max_size=30))
def test_tails_bracketed_by_even_odd_approximants(alpha, beta):
    m = min(len(alpha), len(beta))
    c = cf.with_constant_tail(alpha[:m], beta[:m], 1.0, 0.5)
    xi = cf.tail_value(c, 1).value
    n = m + 5
    a_even = cf.approximant(c, 1, n if n % 2 == 0 else n + 1)
    a_odd = cf.approximant(c, 1, n if n % 2 == 1 else n + 1)
    # even number of levels sits below the tail, odd above
    assert a_even <= xi + 1e-12 and xi <= a_odd + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(1.0, 6.0), min_size=2, max_size=50),
       st.lists(st.floats(0.05, 4.0), min_size=2, max_size=50),
       st.integers(1, 10), st.integers(0, 30))
def test_inequality_families_hold(alpha, beta, k, depth):
    m = min(len(alpha), len(beta))
    c = cf.with_constant_tail(alpha[:m], beta[:m], 2.0, 1.0)
    items = cf.check_tail_inequalities(c, k, k + depth)
    names = {i.name for i in items}
    assert "last_level" in names
    bad = [i for i in items if not i.passed]
    assert not bad, bad


def test_families_cover_all_items():
    c = cf.constant(1.5, 0.8)
    items = cf.check_tail_inequalities(c, 1, 6)
    listed = {n for group in cf.FAMILIES.values() for n in group}
    assert {i.name for i in items} == listed
    assert len(cf.FAMILIES) == 8


def test_alpha_below_one_skips_dependent_items():
    c = cf.constant(0.5, 0.8)
    names = {i.name for i in cf.check_tail_inequalities(c, 1, 6)}
    assert "last_level" not in names and "alternation" in names
    assert math.isfinite(cf.tail_value(c, 1).value)
