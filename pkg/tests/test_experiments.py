import math

import numpy as np
import pytest
from scipy import stats

from engel_ldp.chains import A_PROCESS, C_PROCESS, ProcessKind
from engel_ldp.errors import DomainError, FitError
from engel_ldp.experiments import (
    Method,
    Side,
    TailEstimate,
    cross_validate_samplers,
    estimate_tail_mc,
    estimate_tails_dp,
    estimate_tails_mc,
    fit_rate,
    gof_transition,
    kernel_probs,
    williams_gap_report,
)
from engel_ldp.ldp import rate_c
from engel_ldp.rng import RngStream


def _exact(n, lp, se=0.0):
    return TailEstimate(C_PROCESS, n, 0.0, Side.LOWER, lp, se, Method.DP_EXACT)


def test_fit_exact_line():
    fit = fit_rate([_exact(n, -n * math.log(2)) for n in (10, 20, 30, 40)])
    assert fit.slope == pytest.approx(math.log(2), abs=1e-14)
    assert fit.two_point_slope == pytest.approx(math.log(2), abs=1e-14)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)


def test_fit_needs_two_points():
    with pytest.raises(FitError):
        fit_rate([_exact(10, -1.0)])
    with pytest.raises(FitError):
        fit_rate([_exact(10, -1.0), _exact(20, -math.inf)])


@pytest.mark.xfail(
    strict=True,
    reason="one-point -(1/n) log P at n=40 is ~0.080: the prefactor adds ~0.04 at this n",
)
def test_mc_upper_tail_one_point():
    est = estimate_tail_mc(C_PROCESS, 40, 0.3, "UPPER", 1_000_000, RngStream(1, 0))
    assert abs(-est.log_prob / 40 - rate_c(0.3)) < 0.03


def test_mc_upper_tail_matches_gamma_proxy():
    # log C_n exceeds a Gamma(n) sum by a bounded gap with median ~0.4
    est = estimate_tail_mc(C_PROCESS, 40, 0.3, "UPPER", 1_000_000, RngStream(1, 0))
    lo, hi = stats.gamma(40).sf(52.0), stats.gamma(40).sf(51.0)
    assert lo < math.exp(est.log_prob) < hi


def test_mc_upper_tail_two_point_slope():
    ests = [estimate_tail_mc(C_PROCESS, n, 0.3, "UPPER", 1_000_000, RngStream(1, n)) for n in (40, 80)]
    assert abs(fit_rate(ests).two_point_slope - rate_c(0.3)) < 0.02


def test_mc_a_corner():
    n = 10
    x = math.log(2.5) / n - 1
    est = estimate_tail_mc(A_PROCESS, n, x, Side.LOWER, 1_000_000, RngStream(2, 0))
    p = 2.0**-n
    assert abs(est.hits - p * 1e6) < 3 * math.sqrt(1e6 * p * (1 - p))


def test_mc_no_deviation_at_zero():
    est = estimate_tail_mc(C_PROCESS, 20, 0.0, Side.UPPER, 100_000, RngStream(3, 0))
    assert 0.2 < math.exp(est.log_prob) < 0.8


def test_mc_zero_hits_reports_bound():
    est = estimate_tail_mc(C_PROCESS, 20, 3.0, Side.UPPER, 1000, RngStream(4, 0))
    assert est.hits == 0 and est.log_prob == -math.inf
    assert est.log_upper_bound == pytest.approx(math.log(3.0 / 1000), abs=0.01)


def test_mc_replica_floor():
    with pytest.raises(DomainError):
        estimate_tail_mc(C_PROCESS, 5, 0.0, Side.UPPER, 999, RngStream(1, 0))


def test_mc_independent_of_threads():
    a = estimate_tails_mc(A_PROCESS, 15, [0.2, 0.4], Side.UPPER, 300_000, RngStream(5, 0), threads=1)
    b = estimate_tails_mc(A_PROCESS, 15, [0.2, 0.4], Side.UPPER, 300_000, RngStream(5, 0), threads=3)
    assert [e.hits for e in a] == [e.hits for e in b]


@pytest.mark.parametrize("kind, n, x", [(A_PROCESS, 12, -0.6), (C_PROCESS, 12, -0.55), (ProcessKind("A", 3), 10, -0.5)])
def test_dp_vs_mc(kind, n, x):
    (dp,) = estimate_tails_dp(kind, [n], x)
    assert math.exp(dp.log_prob) > 1e-4
    mc = estimate_tail_mc(kind, n, x, Side.LOWER, 1_000_000, RngStream(6, n))
    assert abs(mc.log_prob - dp.log_prob) < 4 * mc.std_error


def test_c_rate_other_start():
    ests = estimate_tails_dp(ProcessKind("C", 3), [70, 80], -0.9)
    slope = fit_rate(ests).two_point_slope
    assert abs(slope - rate_c(-0.9)) < 0.1 * rate_c(-0.9)


def test_kernel_probs_rows_sum_to_one():
    js = np.arange(1, 200_001)
    for kind, i in ((C_PROCESS, 4), (A_PROCESS, 4)):
        p = kernel_probs(kind, i, js)
        w = kind.weight(i)
        assert p.sum() + w / 200_000 == pytest.approx(1.0, abs=1e-12)


def test_gof_transition_c5():
    res = gof_transition(C_PROCESS, 5, 200_000, RngStream(7, 0))
    assert res.p_value > 0.001 and res.statistic >= 0


@pytest.mark.parametrize("source", ["williams", "digits"])
def test_gof_other_sources(source):
    res = gof_transition(C_PROCESS, 2, 50_000, RngStream(8, 0), source=source)
    assert res.p_value > 0.001


def test_gof_sample_floor():
    with pytest.raises(DomainError):
        gof_transition(C_PROCESS, 5, 100, RngStream(1, 0))


@pytest.mark.parametrize("kind, against", [(C_PROCESS, "williams"), (A_PROCESS, "williams"), (C_PROCESS, "exact")])
def test_cross_validation(kind, against):
    n = 1 if against == "exact" else 2
    res = cross_validate_samplers(kind, n, 200_000, RngStream(9, 0), against)
    assert res.p_value > 0.001


def test_williams_gap_report():
    rows = williams_gap_report([10, 100], 5000, RngStream(10, 0))
    assert len(rows) == 4
    for r in rows:
        assert r["min"] >= 0
        assert r["q50"] <= r["q90"] <= r["q99"]


def test_rate_ordering_observable():
    ns = [30, 40]
    c = fit_rate(estimate_tails_dp(C_PROCESS, ns, -0.75)).two_point_slope
    a = fit_rate(estimate_tails_dp(A_PROCESS, ns, -0.75)).two_point_slope
    assert c > a
