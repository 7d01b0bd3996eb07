"""Exact checks of the Fibonacci-contraction sequence bounds."""

from fractions import Fraction

import gmpy2
import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from christov_lab import seqlib
from christov_lab.seqlib import FibSequence

rationals = st.fractions(min_value=0, max_value=10, max_denominator=1000)
ratios = st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(49, 100), max_denominator=1000)
small_ratios = st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(1, 6), max_denominator=1000)
shrink = st.fractions(min_value=0, max_value=1, max_denominator=50)


def test_fibonacci_numbers_are_exact():
    assert [seqlib.fibonacci_number(k) for k in range(10)] == [0, 1, 1, 2, 3, 5, 8, 13, 21, 34]
    assert seqlib.fibonacci_number(50) == 12586269025
    assert seqlib.fibonacci_number(100) == 354224848179261915075
    with pytest.raises(seqlib.SeqlibError):
        seqlib.fibonacci_number(-1)


def test_constructor_validation():
    with pytest.raises(seqlib.SeqlibError, match="negative"):
        FibSequence([1, -1, 0], Fraction(1, 4))
    with pytest.raises(seqlib.SeqlibError, match="NaN"):
        FibSequence([1, float("nan"), 0], 0.25)
    for bad in (0, Fraction(1, 2), -0.1, 0.7):
        with pytest.raises(seqlib.SeqlibError, match="alpha0"):
            FibSequence([1, 1, 0], bad)


def test_condition_needs_three_entries():
    with pytest.raises(seqlib.SequenceLengthError):
        seqlib.check_fibonacci_condition(FibSequence([1, 1], Fraction(1, 4)))


def test_first_failure_index_is_reported():
    a = seqlib.equality_recursion(mpq(1), mpq(1), mpq(1, 4), 8)
    a[5] = a[5] + mpq(1, 10**30)
    seq = FibSequence(a, mpq(1, 4))
    cert = seqlib.check_fibonacci_condition(seq)
    assert seqlib.first_failure(cert) == 5
    assert [c.passed for c in cert] == [True, True, True, False, True, True]
    with pytest.raises(seqlib.PreconditionError) as info:
        seqlib.tail_bound(seq)
    assert info.value.index == 5


def test_tail_bound_closed_form():
    seq = FibSequence([mpq(1), mpq(1), mpq(1, 2)], mpq(1, 4))
    tb = seqlib.tail_bound(seq)
    assert tb.tail_sum_bound == mpq(3, 2)
    assert tb.partial_sum_bound == mpq(7, 2)
    assert tb.decay_rate is None


def test_tail_bound_is_the_limit_of_the_equality_recursion():
    # Summing a_l = alpha (a_{l-1} + a_{l-2}) gives S (1 - 2 alpha) = a0 (1 - alpha) + a1.
    a0, a1, alpha = mpq(3), mpq(2), mpq(1, 5)
    seq = FibSequence(seqlib.equality_recursion(a0, a1, alpha, 3), alpha)
    assert seqlib.tail_bound(seq).partial_sum_bound == (a0 * (1 - alpha) + a1) / (1 - 2 * alpha)


@settings(max_examples=200, deadline=None)
@given(a0=rationals, a1=rationals, alpha=ratios, factors=st.lists(shrink, min_size=1, max_size=30))
def test_prefix_sums_below_bound_for_any_contraction(a0, a1, alpha, factors):
    a = [a0, a1]
    for u in factors:
        a.append(u * alpha * (a[-1] + a[-2]))
    seq = FibSequence(a, alpha)
    bound = seqlib.tail_bound(seq).partial_sum_bound
    total = Fraction(0)
    for x in a:
        total += x
        assert total <= bound


@settings(max_examples=100, deadline=None)
@given(a0=rationals, a1=rationals, alpha=ratios, k=st.integers(1, 15))
def test_fibonacci_envelope_dominates_equality_recursion(a0, a1, alpha, k):
    seq = FibSequence(seqlib.equality_recursion(a0, a1, alpha, 2 * k + 2), alpha)
    even, odd = seqlib.fibonacci_envelope(seq, k)
    assert seq.values[2 * k] <= even
    assert seq.values[2 * k + 1] <= odd


def test_envelope_is_sharp_at_k_one():
    # a_2 = alpha (a_0 + a_1) = alpha phi_2 beta0 for the equality recursion.
    alpha = mpq(1, 3)
    seq = FibSequence(seqlib.equality_recursion(mpq(2), mpq(5), alpha, 4), alpha)
    even, odd = seqlib.fibonacci_envelope(seq, 1)
    assert seq.values[2] == even
    assert seq.values[3] < odd


def test_envelope_rejects_k_below_one():
    with pytest.raises(seqlib.SeqlibError):
        seqlib.fibonacci_envelope(FibSequence([1, 1, 0], Fraction(1, 4)), 0)


@settings(max_examples=100, deadline=None)
@given(a0=rationals, a1=rationals, alpha=small_ratios)
def test_geometric_decay(a0, a1, alpha):
    seq = FibSequence(seqlib.equality_recursion(a0, a1, alpha, 40), alpha)
    for k in range(20):
        bound = seqlib.geometric_decay_bound(seq, k)
        assert bound == seq.beta0 / 2**k
        assert seq.values[2 * k] <= bound and seq.values[2 * k + 1] <= bound


def test_decay_and_cauchy_require_small_alpha():
    seq = FibSequence([1, 1, 0], Fraction(1, 5))
    with pytest.raises(seqlib.DomainError):
        seqlib.geometric_decay_bound(seq, 1)
    with pytest.raises(seqlib.DomainError):
        seqlib.cauchy_gap_bound(seq, 0, 2)


@settings(max_examples=100, deadline=None)
@given(a0=rationals, a1=rationals, alpha=small_ratios, n=st.integers(0, 20), span=st.integers(1, 20))
def test_cauchy_gap(a0, a1, alpha, n, span):
    m = n + span
    seq = FibSequence(seqlib.equality_recursion(a0, a1, alpha, m + 1), alpha)
    assert sum(seq.values[n:m], Fraction(0)) <= seqlib.cauchy_gap_bound(seq, n, m)


def test_cauchy_gap_index_validation():
    seq = FibSequence([1, 1, 0], Fraction(1, 6))
    assert seqlib.cauchy_gap_bound(seq, 3, 4) == Fraction(10, 2)
    with pytest.raises(seqlib.SeqlibError):
        seqlib.cauchy_gap_bound(seq, 3, 3)


def test_equality_recursion_passes_with_equality_in_floats():
    a = seqlib.equality_recursion(1.0, 2.0, 0.25, 30)
    cert = seqlib.check_fibonacci_condition(FibSequence(a, 0.25))
    assert all(c.passed and c.lhs == c.rhs for c in cert)


def test_generic_number_types_agree():
    for num in (Fraction, mpq):
        alpha = num(2, 7)
        seq = FibSequence(seqlib.equality_recursion(num(5), num(3), alpha, 12), alpha)
        tb = seqlib.tail_bound(seq)
        assert tb.partial_sum_bound == (5 * (1 - alpha) + 3) / (1 - 2 * alpha)
    assert isinstance(tb.partial_sum_bound, type(gmpy2.mpq(1)))
