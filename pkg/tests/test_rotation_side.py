import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yoccoz.cf_arith import ContinuedFraction
from yoccoz.rotation_side import (
    S,
    U,
    child_layout,
    closest_return_lengths,
    level_counts,
    partition_rotation,
    subdivision_points,
    verify_rotation_bounds,
)

G = (math.sqrt(5) - 1) / 2


def test_golden_closed_form():
    rl = closest_return_lengths([1] * 30, 20)
    for k in range(21):
        assert rl.beta(k) == pytest.approx(G ** (k + 1), rel=1e-12)
    assert rl.beta(2) == pytest.approx(0.2360679775, abs=1e-10)


def test_silver_beta1():
    rl = closest_return_lengths([2] * 20, 5)
    assert rl.beta(1) == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-12)
    assert rl.beta(1) == pytest.approx(0.1715729, abs=1e-7)


def test_beta0_is_theta():
    # beta_0 = |q_0 theta - p_0| = theta; for a_1 = 1 that is the golden value itself
    assert closest_return_lengths([1] * 10, 2).beta(0) == pytest.approx(G)
    assert closest_return_lengths([3] * 10, 2).beta(0) == pytest.approx((math.sqrt(13) - 3) / 2)


def test_golden_partition_level2():
    P = partition_rotation([1] * 10, 2)
    assert P.points == pytest.approx([0.0, 1 - G])


def test_partition_cardinality():
    P = partition_rotation([3, 4, 5, 6], 1)
    assert len(P) == 3


def test_silver_partition_level2():
    rl = closest_return_lengths([2] * 10, 5)
    P = partition_rotation([2] * 10, 2, rl=rl)
    assert len(P) == 5
    allowed = {rl.beta(1), rl.beta(1) + rl.beta(2)}
    for L in P.lengths:
        assert min(abs(L - a) for a in allowed) < 1e-12


def test_verify_bounds_golden_silver():
    for cf in ([1] * 17, [2] * 17):
        rows = verify_rotation_bounds(cf, 15)
        assert len(rows) == 15
        assert all(r.lower_ratio >= 1 and r.upper_ratio <= 1 for r in rows)


def test_subdivision_examples():
    rl = closest_return_lengths([1] * 12, 10)
    sub = subdivision_points(rl, 3, U)
    assert sub.k == 2
    assert sub.ratio_max == pytest.approx(2 * G, rel=1e-9)
    sub = subdivision_points(rl, 4, S)
    assert sub.k == 1 and sub.ratio_max == 1.0
    rl5 = closest_return_lengths([5] * 10, 8)
    for n in range(1, 7):
        for kind in (S, U):
            sub = subdivision_points(rl5, n, kind)
            assert sub.k in (5, 6)
            assert 0.5 <= sub.ratio_min <= sub.ratio_max <= 2


def _check_layouts(terms, n_max):
    rl = closest_return_lengths(terms, n_max + 1)
    for n in range(n_max):
        A = partition_rotation(terms, n, rl=rl)
        B = partition_rotation(terms, n + 1, rl=rl)
        where = {p: i for i, p in enumerate(B.points_int)}
        assert set(A.points_int) <= set(where)
        counts = level_counts(terms, n + 1)
        assert B.kinds.count(S) == counts[S] and B.kinds.count(U) == counts[U]
        for i, p in enumerate(A.points_int):
            j = where[p]
            end = where[A.points_int[i + 1]] if i + 1 < len(A) else len(B)
            assert list(B.kinds[j:end]) == child_layout(n, A.kinds[i], terms[n])


def test_layout_matches_materialized():
    _check_layouts([1] * 16, 12)
    _check_layouts([3, 1, 4, 1, 5, 9, 2, 6], 5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=4, max_size=8))
def test_layout_property(terms):
    cf = ContinuedFraction.from_terms(terms)
    n_max = max(n for n in range(len(terms) - 1) if cf.q(n + 1) <= 5000) if cf.q(1) <= 5000 else 0
    _check_layouts(terms, n_max)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 10**4), min_size=2, max_size=40))
def test_bounds_property(terms):
    rows = verify_rotation_bounds(terms, len(terms) - 1)
    assert all(r.adjacent_max <= 2 for r in rows)
