import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from engel_ldp.errors import DomainError
from engel_ldp.ldp import (
    INF,
    RateFunctionSpec,
    compare_rates,
    conjugate,
    lambda_a,
    lambda_c,
    legendre_numeric,
    log_mgf_closed,
    rate,
    rate_a,
    rate_a_initial,
    rate_c,
)

LOG2 = math.log(2)
SPECS = [RateFunctionSpec("C"), RateFunctionSpec("A"), RateFunctionSpec("A", 3), RateFunctionSpec("A", 7)]
xs = st.floats(-1.5, 5.0, allow_nan=False)


def test_rate_examples():
    assert rate_c(0) == 0
    assert rate_c(0.5) == pytest.approx(0.5 - math.log(1.5), abs=1e-15)
    assert rate_a(-0.75) == pytest.approx(LOG2 - 0.25, abs=1e-15)
    assert rate_a(-1) == pytest.approx(LOG2, abs=1e-15)
    assert rate_a_initial(-1, 3) == pytest.approx(math.log(3), abs=1e-15)
    assert rate_c(-1) == INF and rate_a(-1.01) == INF


def test_a2_is_default_a():
    for x in np.linspace(-1.2, 3, 421):
        assert rate_a_initial(x, 2) == pytest.approx(rate_a(x), abs=1e-15)
    assert rate("A", -0.8) == rate(RateFunctionSpec("A", 2), -0.8)


def test_spec_validation():
    with pytest.raises(DomainError):
        RateFunctionSpec("C", 3)
    with pytest.raises(DomainError):
        RateFunctionSpec("A", 1)
    with pytest.raises(DomainError):
        rate_a_initial(0.0, 1)


def test_lambda_examples():
    assert lambda_c(0) == 0
    assert lambda_c(-1) == pytest.approx(1 - LOG2, abs=1e-15)
    assert lambda_a(-2) == pytest.approx(2 - LOG2, abs=1e-15)
    assert lambda_a(-1.0) == pytest.approx(1 - LOG2, abs=1e-15)
    assert lambda_a(-1.0 + 1e-12) == pytest.approx(1 - LOG2, abs=1e-11)
    assert lambda_c(1.0) == INF and log_mgf_closed("a", 2.0) == INF
    with pytest.raises(DomainError):
        log_mgf_closed("B", 0.0)


@pytest.mark.parametrize("spec", SPECS)
@settings(max_examples=200, deadline=None)
@given(x=xs)
def test_nonnegative_unique_zero(spec, x):
    v = rate(spec, x)
    assert v >= 0
    if v == 0:
        # only x == 0, or x^2/2 below the smallest double
        assert abs(x) < 1e-154


@pytest.mark.parametrize("spec", SPECS)
@settings(max_examples=200, deadline=None)
@given(a=xs, b=xs, t=st.floats(0, 1))
def test_convex(spec, a, b, t):
    fa, fb = rate(spec, a), rate(spec, b)
    assume(math.isfinite(fa) and math.isfinite(fb))
    m = t * a + (1 - t) * b
    assert rate(spec, m) <= t * fa + (1 - t) * fb + 1e-12


@pytest.mark.parametrize("a", [2, 3, 5, 10])
def test_continuous_at_kink(a):
    k = -1 + 1 / a
    assert rate_a_initial(k - 1e-12, a) == pytest.approx(rate_a_initial(k + 1e-12, a), abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.999, 4.0))
def test_a_family_tends_to_c(x):
    # for fixed x > -1 the linear branch shrinks away as a grows
    assert rate_a_initial(x, 10**6) == pytest.approx(rate_c(x), abs=1e-9)
    assert rate_a_initial(x, 3) <= rate_c(x) + 1e-15


def test_legendre_examples():
    r = legendre_numeric(lambda_c, 0.5)
    assert abs(r.supremum - rate_c(0.5)) < 1e-8
    assert r.argmax_theta == pytest.approx(1 / 3, abs=1e-5)
    assert r.certified()

    r = legendre_numeric(lambda_a, -0.75)
    assert abs(r.supremum - (LOG2 - 0.25)) < 1e-8
    assert r.argmax_theta == pytest.approx(-1.0, abs=1e-5)

    r = legendre_numeric(lambda_c, 0.0)
    assert abs(r.supremum) < 1e-12 and abs(r.argmax_theta) < 1e-5


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.95, 4.0))
def test_legendre_recovers_rates(x):
    assert abs(legendre_numeric(lambda_c, x).supremum - rate_c(x)) < 1e-8
    assert abs(legendre_numeric(lambda_a, x).supremum - rate_a(x)) < 1e-8


def test_legendre_json():
    import json

    obj = json.loads(legendre_numeric(lambda_c, 1.0).to_json())
    assert obj["supremum"] == pytest.approx(1 - LOG2, abs=1e-10)


def test_double_conjugation():
    # I** = I for the convex lower-semicontinuous rates
    f = lambda x: rate_a_initial(x, 3)  # noqa: E731
    fstar = conjugate(f, (-1.0, 6.0), grid=1401)
    fss = conjugate(fstar, (-60.0, 0.9), grid=1201)
    for x in (-0.9, -0.7, -0.5, 0.0, 0.5, 1.5):
        assert fss(x) == pytest.approx(f(x), abs=1e-6)


def test_legendre_empty_domain():
    with pytest.raises(DomainError):
        legendre_numeric(lambda_c, 0.0, (1.0, 1.0))


def test_compare_examples():
    rows = {x: g for x, _, _, g in compare_rates([0.3, -0.75, -1.0, -1.2, -0.5])}
    assert rows[0.3] == 0.0
    assert rows[-0.75] == pytest.approx(math.log(2) - 0.5, abs=1e-12)
    assert rows[-1.0] == INF
    assert rows[-1.2] == 0.0
    assert rows[-0.5] == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.9999, -0.5001))
def test_gap_strict_on_kink_interval(x):
    (_, ic, ia, g), = compare_rates([x])
    assert g > 0 and ic >= ia
