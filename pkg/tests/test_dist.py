import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engel_ldp.chains import A_PROCESS, C_PROCESS, ProcessKind
from engel_ldp.dist import (
    forward_dp,
    iter_forward_dp,
    lemma1_bracket,
    log_mgf,
    lower_threshold,
    tail_prob_lower,
    tail_probs_lower,
)
from engel_ldp.errors import DomainError, ResourceError, UnsupportedMethodError
from engel_ldp.ldp import rate_a


def exact_law(kind, n, cap):
    """Rational law of X_n restricted to states <= cap (escape is permanent)."""
    w = kind.weight
    law = {kind.initial: Fraction(1)}
    for _ in range(n):
        new = {}
        for i, p in law.items():
            start = i + 1 if kind.family == "C" else i
            for j in range(start, cap + 1):
                new[j] = new.get(j, 0) + p * Fraction(w(i), j * (j - 1))
        law = new
    return law


def test_c_one_step():
    d = forward_dp(C_PROCESS, 1, 10)
    probs = np.exp(d.log_probs)
    for j in range(2, 11):
        assert probs[j] == pytest.approx(1 / (j * (j - 1)), rel=1e-14)
    assert math.exp(d.log_escaped) == pytest.approx(0.1, rel=1e-14)


def test_c_two_steps_brute_force():
    J = 50
    d = forward_dp(C_PROCESS, 2, J)
    p1 = {i: 1 / (i * (i - 1)) for i in range(2, J + 1)}
    for j in range(3, J + 1):
        ref = math.fsum(p1[i] * i / (j * (j - 1)) for i in range(2, j))
        assert math.exp(d.log_prob(j)) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("kind", [C_PROCESS, A_PROCESS, ProcessKind("A", 3), ProcessKind("C", 2)])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_matches_rational_enumeration(kind, n):
    cap = 100
    law = exact_law(kind, n, cap)
    d = forward_dp(kind, n, cap)
    for j, p in law.items():
        assert math.exp(d.log_prob(j)) == pytest.approx(float(p), rel=1e-12)
    tracked = sum(law.values())
    assert math.exp(d.log_escaped) == pytest.approx(float(1 - tracked), rel=1e-12)


def test_a_corner_exact():
    for d in iter_forward_dp(A_PROCESS, 64, 50):
        assert d.log_prob(2) == pytest.approx(-d.n * math.log(2), rel=1e-12)


@pytest.mark.parametrize("kind", [C_PROCESS, A_PROCESS])
def test_mass_conservation_and_monotone_escape(kind):
    prev = -math.inf
    for d in iter_forward_dp(kind, 5000, 40):
        assert abs(d.log_total_mass()) < 1e-12
        assert d.log_escaped >= prev
        prev = d.log_escaped


def test_dp_validation():
    with pytest.raises(DomainError):
        forward_dp(A_PROCESS, 3, 2)
    with pytest.raises(DomainError):
        forward_dp(C_PROCESS, 0, 10)


def test_tail_examples():
    n = 12
    x = math.log(2.5) / n - 1
    assert lower_threshold(n, x) == 2
    assert tail_prob_lower(A_PROCESS, n, x) == pytest.approx(-n * math.log(2), rel=1e-12)
    assert lower_threshold(1, math.log(2) - 1) == 2
    assert tail_prob_lower(C_PROCESS, 1, math.log(2) - 1) == pytest.approx(math.log(0.5), rel=1e-12)


def test_tail_rate_moves_toward_linear_branch():
    lps = tail_probs_lower(A_PROCESS, [30, 40], -0.8)
    slope = -(lps[40] - lps[30]) / 10
    assert abs(slope - rate_a(-0.8)) < 0.1 * rate_a(-0.8)


def test_tail_budget():
    with pytest.raises(ResourceError):
        lower_threshold(100, 0.0, budget=10**6)
    with pytest.raises(DomainError):
        tail_prob_lower(A_PROCESS, 10, -0.99)


def test_mgf_one_step_basel():
    r = log_mgf(C_PROCESS, 1, -1.0, cap=100_000)
    target = math.log(2 - math.pi**2 / 6)
    assert r.log_value <= target <= r.log_value + r.error_bound
    assert r.error_bound < 1e-9


def test_mgf_theta_zero_exact():
    r = log_mgf(C_PROCESS, 5, 0.0, cap=1000)
    assert abs(r.log_value) < 1e-12 and r.error_bound < 1e-12


def test_mgf_a_limit():
    r = log_mgf(A_PROCESS, 200, -2.0, cap=100_000)
    assert abs(r.rate + math.log(2)) < 0.02
    assert r.error_bound < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.floats(-3.0, -0.1), st.sampled_from("CA"))
def test_mgf_bracket_contains_reference(n, theta, fam):
    # a much larger cap gives a nested, tighter bracket
    kind = ProcessKind(fam)
    coarse = log_mgf(kind, n, theta, cap=2_000)
    fine = log_mgf(kind, n, theta, cap=400_000)
    assert coarse.log_value - 1e-12 <= fine.log_value
    assert fine.log_value + fine.error_bound <= coarse.log_value + coarse.error_bound + 1e-12


def test_mgf_positive_theta_unsupported():
    with pytest.raises(UnsupportedMethodError):
        log_mgf(C_PROCESS, 3, 0.5)


def test_lemma_examples():
    b = lemma1_bracket(1, 0.0)
    assert b.value == pytest.approx(1.0, abs=1e-9)
    assert (b.lower, b.upper) == (0.5, 2.0)

    b = lemma1_bracket(2, -1.0)
    assert b.value == pytest.approx(4 * (0.5 - (math.pi**2 / 6 - 1.25)), abs=1e-9)
    assert b.lower == pytest.approx(2 / 9) and b.upper == pytest.approx(0.75)

    b = lemma1_bracket(10_000, 0.9)
    assert b.holds
    assert b.lower == pytest.approx(10.0, rel=2e-4) and b.upper == pytest.approx(10.0, rel=2e-4)


def test_lemma_domain():
    with pytest.raises(DomainError):
        lemma1_bracket(3, 1.0)
    with pytest.raises(DomainError):
        lemma1_bracket(0, 0.5)
