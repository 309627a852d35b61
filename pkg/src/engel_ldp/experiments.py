"""Verification experiments: tail estimates, rate fits, goodness-of-fit checks.

Monte Carlo replicas are split into fixed-size chunks, chunk ``k`` drawing
from ``rng.substream(k)``; aggregates are integer counts, so results do not
depend on how chunks are scheduled across threads.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .chains import (
    EXACT_LIMIT,
    ProcessKind,
    record_times_batch,
    sample_digits_uniform,
    simulate_batch,
    williams_batch,
)
from .dist import DEFAULT_STATE_BUDGET, forward_dp, tail_probs_lower
from .engel import ExpansionKind
from .errors import BinningError, DomainError, FitError
from .rng import RngStream

__all__ = [
    "Side",
    "Method",
    "TailEstimate",
    "RateFit",
    "GofResult",
    "estimate_tail_mc",
    "estimate_tails_mc",
    "estimate_tails_dp",
    "fit_rate",
    "gof_transition",
    "kernel_probs",
    "cross_validate_samplers",
    "williams_gap_report",
    "CHUNK",
]

CHUNK = 1 << 17
_LOG_EXACT = math.log(EXACT_LIMIT)


class Side(str, enum.Enum):
    LOWER = "LOWER"
    UPPER = "UPPER"


class Method(str, enum.Enum):
    DP_EXACT = "DP_EXACT"
    MONTE_CARLO = "MONTE_CARLO"


@dataclass(frozen=True)
class TailEstimate:
    kind: ProcessKind
    n: int
    x: float
    side: Side
    log_prob: float
    std_error: float
    method: Method
    replicas: int = 0
    hits: int = 0
    # one-sided 95% bound on log P when there are no hits
    log_upper_bound: "float | None" = None

    def to_row(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.label()
        d["side"] = self.side.value
        d["method"] = self.method.value
        return d


@dataclass(frozen=True)
class RateFit:
    estimates: tuple
    slope: float
    intercept: float
    stderr: float
    two_point_slope: float

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "two_point_slope": self.two_point_slope,
            "estimates": [e.to_row() for e in self.estimates],
        }


@dataclass(frozen=True)
class GofResult:
    statistic: float
    dof: int
    p_value: float
    observed: tuple = field(default=(), repr=False)
    expected: tuple = field(default=(), repr=False)

    def to_json(self) -> dict:
        return {"statistic": self.statistic, "dof": self.dof, "p_value": self.p_value}


def _chunks(total: int, chunk: int = CHUNK):
    k, done = 0, 0
    while done < total:
        size = min(chunk, total - done)
        yield k, size
        k += 1
        done += size


def _map_chunks(fn, total, threads):
    jobs = list(_chunks(total))
    if threads <= 1:
        return [fn(k, size) for k, size in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def estimate_tails_mc(
    kind: ProcessKind,
    n: int,
    xs: Sequence[float],
    side: "Side | str",
    replicas: int,
    rng: RngStream,
    threads: int = 1,
) -> list[TailEstimate]:
    """Monte Carlo estimates of ``P((log X_n - n)/n <= x)`` (LOWER) or ``>= x`` (UPPER).

    All levels in ``xs`` are read off the same simulated paths.
    """
    side = Side(side)
    if replicas < 1000:
        raise DomainError("need at least 1000 replicas")
    xs = [float(x) for x in xs]
    levels = [n * (1.0 + x) for x in xs]

    def run(k, size):
        gen = rng.substream(k).generator()
        s, logs = simulate_batch(kind, n, size, gen)[n]
        counts = []
        for t in levels:
            if side is Side.LOWER:
                if t < _LOG_EXACT:
                    hit = s <= math.floor(math.exp(t) * (1.0 + 1e-12))
                else:
                    hit = logs <= t
            else:
                hit = logs >= t
            counts.append(int(np.count_nonzero(hit)))
        return counts

    per_chunk = _map_chunks(run, replicas, threads)
    totals = [sum(c[i] for c in per_chunk) for i in range(len(xs))]
    out = []
    for x, hits in zip(xs, totals):
        if hits == 0:
            out.append(
                TailEstimate(kind, n, x, side, -math.inf, math.inf, Method.MONTE_CARLO,
                             replicas, 0, math.log(3.0 / replicas))
            )
            continue
        p = hits / replicas
        se = math.sqrt((1.0 - p) / (p * replicas))
        out.append(TailEstimate(kind, n, x, side, math.log(p), se, Method.MONTE_CARLO, replicas, hits))
    return out


def estimate_tail_mc(kind, n, x, side, replicas, rng, threads: int = 1) -> TailEstimate:
    return estimate_tails_mc(kind, n, [x], side, replicas, rng, threads)[0]


def estimate_tails_dp(
    kind: ProcessKind, ns: Sequence[int], x: float, budget: int = DEFAULT_STATE_BUDGET
) -> list[TailEstimate]:
    """Exact lower-tail estimates for each ``n`` (one DP pass)."""
    logs = tail_probs_lower(kind, ns, x, budget)
    return [
        TailEstimate(kind, n, x, Side.LOWER, logs[n], 0.0, Method.DP_EXACT)
        for n in sorted(logs)
    ]


def fit_rate(estimates: Sequence[TailEstimate]) -> RateFit:
    """Weighted least squares of ``-log P`` on ``n``; also the top two-point slope."""
    if not estimates:
        raise FitError("no estimates")
    keys = {(e.kind, e.x, e.side) for e in estimates}
    if len(keys) != 1:
        raise FitError("estimates must share kind, x and side")
    pts = sorted((e for e in estimates if math.isfinite(e.log_prob)), key=lambda e: e.n)
    if len({e.n for e in pts}) < 2:
        raise FitError("need at least two distinct n with finite log-probabilities")
    n = np.array([e.n for e in pts], dtype=float)
    y = np.array([-e.log_prob for e in pts])
    se = np.array([e.std_error for e in pts])
    # exact DP points (zero error) get equal weights
    w = 1.0 / se**2 if np.all(se > 0) else np.ones_like(n)
    W = w.sum()
    nbar = (w * n).sum() / W
    ybar = (w * y).sum() / W
    sxx = (w * (n - nbar) ** 2).sum()
    slope = float((w * (n - nbar) * (y - ybar)).sum() / sxx)
    intercept = float(ybar - slope * nbar)
    if np.all(se > 0):
        stderr = float(math.sqrt(1.0 / sxx))
    elif len(pts) > 2:
        resid = y - (intercept + slope * n)
        stderr = float(math.sqrt((resid**2).sum() / (len(pts) - 2) / sxx))
    else:
        stderr = 0.0
    a, b = pts[-2], pts[-1]
    two = (a.log_prob - b.log_prob) / (b.n - a.n)
    return RateFit(tuple(pts), slope, intercept, stderr, float(two))


def kernel_probs(kind: ProcessKind, i: int, js) -> np.ndarray:
    """``p(i, j)`` from the transition kernel, vectorised over ``js``."""
    js = np.asarray(js, dtype=float)
    w = i if kind.family == "C" else i - 1
    lo = i + 1 if kind.family == "C" else i
    out = np.zeros_like(js)
    ok = js >= lo
    out[ok] = w / (js[ok] * (js[ok] - 1.0))
    return out


def _kernel_bins(kind: ProcessKind, i: int, samples: int, bins: "int | None"):
    start = i + 1 if kind.family == "C" else i
    w = i if kind.family == "C" else i - 1
    if bins is None:
        # singletons while the expected count stays comfortably above 5
        m = 1
        while m < 60 and samples * w / ((start + m) * (start + m - 1)) >= 20:
            m += 1
        bins = m + 1
    singles = np.arange(start, start + bins - 1)
    expected = samples * np.append(kernel_probs(kind, i, singles), w / (start + bins - 2))
    if np.any(expected < 5):
        raise BinningError("some bin has expected count < 5; use fewer bins or more samples")
    return singles, expected


def _bin_counts(values: np.ndarray, singles: np.ndarray) -> np.ndarray:
    first, last = int(singles[0]), int(singles[-1])
    v = np.asarray(values, dtype=float)
    if np.any(v < first):
        raise AssertionError("sample below the kernel support")
    idx = np.where(v > last, len(singles), v - first).astype(np.int64)
    return np.bincount(idx, minlength=len(singles) + 1)


def _one_step_samples(kind, i, samples, rng, source, record_stream_length):
    if source in ("transition", "williams"):
        init = ProcessKind(kind.family, i)
        if source == "williams":
            # one floor step w(i) * exp(W) from an arbitrary state
            out = []
            for k, size in _chunks(samples):
                gen = rng.substream(k).generator()
                w = -np.log(1.0 - gen.random(size))
                with np.errstate(over="ignore"):
                    out.append(np.floor(init.weight(i) * np.exp(w)) + 1.0)
            return np.concatenate(out)
        out = []
        for k, size in _chunks(samples):
            s, _ = simulate_batch(init, 1, size, rng.substream(k).generator())[1]
            out.append(s)
        return np.concatenate(out)
    if source == "records":
        if kind.family != "C":
            raise DomainError("record times form a C-process")
        return _record_transitions(i, samples, record_stream_length, rng)
    if source == "digits":
        ek = ExpansionKind.MODIFIED_ENGEL if kind.family == "C" else ExpansionKind.ENGEL
        nxt = []
        for k in range(samples):
            d = sample_digits_uniform(ek, 2, rng.substream(k)).digits
            if d[0] == i:
                nxt.append(d[1])
        return np.array(nxt, dtype=float)
    raise ValueError(f"unknown source {source!r}")


def _record_transitions(i, n_streams, length, rng, block=64):
    """Next record time after a record at time ``i``, one per stream where ``i`` is a record.

    Streams whose next record lies beyond ``length`` are returned as ``inf``
    (they fall into the tail bin).
    """
    out = []
    for k, size in _chunks(n_streams, block):
        gen = rng.substream(k).generator()
        data = gen.random((size, length))
        for rec in record_times_batch(data):
            pos = np.searchsorted(rec, i)
            if pos < len(rec) and rec[pos] == i:
                out.append(float(rec[pos + 1]) if pos + 1 < len(rec) else math.inf)
    return np.array(out)


def gof_transition(
    kind: ProcessKind,
    i: int,
    samples: int,
    rng: RngStream,
    bins: "int | None" = None,
    source: str = "transition",
    record_stream_length: int = 100_000,
) -> GofResult:
    """Pearson chi-square of observed one-step moves from ``i`` against the kernel.

    ``source`` selects how moves are produced: ``"transition"`` (closed-form
    step), ``"williams"`` (floor of ``w(i) e^W``), ``"records"`` (pairs of
    consecutive record times in i.i.d. uniform streams; ``samples`` is the
    number of streams) or ``"digits"`` (first two certified digits of a
    uniform real; ``samples`` is the number of reals).
    """
    kind = ProcessKind(kind.family, i)
    if source == "transition" and samples < 10_000:
        raise DomainError("need at least 10^4 samples")
    values = _one_step_samples(kind, i, samples, rng, source, record_stream_length)
    singles, expected = _kernel_bins(kind, i, len(values), bins)
    observed = _bin_counts(values, singles)
    stat, p = stats.chisquare(observed, expected)
    return GofResult(float(stat), len(observed) - 1, float(p), tuple(observed.tolist()),
                     tuple(expected.tolist()))


def _pooled_bins(a: np.ndarray, b: np.ndarray, min_count: int = 10):
    """Integer-state bins (singletons, then log2 buckets), merged until each is populated."""
    vals = np.concatenate([a, b])
    lo = int(vals.min())
    edges = list(range(lo, lo + 32))
    e = edges[-1]
    while e < 2.0**60:
        e *= 2
        edges.append(e)
    edges = np.array(edges + [np.inf], dtype=float)
    ca = np.histogram(a, edges)[0]
    cb = np.histogram(b, edges)[0]
    merged_a, merged_b = [], []
    acc_a = acc_b = 0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        if acc_a + acc_b >= min_count:
            merged_a.append(acc_a)
            merged_b.append(acc_b)
            acc_a = acc_b = 0
    if acc_a + acc_b and merged_a:
        merged_a[-1] += acc_a
        merged_b[-1] += acc_b
    return np.array(merged_a), np.array(merged_b)


def cross_validate_samplers(
    kind: ProcessKind,
    n: int,
    replicas: int,
    rng: RngStream,
    against: str = "williams",
) -> GofResult:
    """Compare the step-``n`` marginal of the closed-form sampler with another route.

    ``against="williams"``: two-sample chi-square versus the exponential-increment
    representation.  ``against="exact"``: one-sample chi-square versus the exact
    DP law.
    """
    if n > 5:
        raise DomainError("n <= 5 keeps the bins populated")
    base = []
    for k, size in _chunks(replicas):
        s, _ = simulate_batch(kind, n, size, rng.substream(2 * k).generator())[n]
        base.append(s)
    base = np.concatenate(base)
    if against == "williams":
        other = []
        for k, size in _chunks(replicas):
            gen = rng.substream(2 * k + 1).generator()
            s, _ = simulate_batch(kind, n, size, gen, method="williams")[n]
            other.append(s)
        other = np.concatenate(other)
        ca, cb = _pooled_bins(base, other)
        res = stats.chi2_contingency(np.vstack([ca, cb]), correction=False)
        return GofResult(float(res[0]), int(res[2]), float(res[1]), tuple(ca.tolist()), tuple(cb.tolist()))
    if against == "exact":
        cap = 4096
        dist = forward_dp(kind, n, cap)
        probs = np.exp(dist.log_probs[1:])
        states = np.arange(1, cap + 1)
        # singleton bins while expected >= 20, then one tail bin
        keep = states[(probs * replicas >= 20)]
        last = int(keep.max())
        first = int(keep.min())
        singles = np.arange(first, last + 1)
        exp_single = probs[first - 1:last] * replicas
        exp_tail = replicas - exp_single.sum()
        if np.any(exp_single < 5) or exp_tail < 5:
            raise BinningError("sparse exact bins")
        observed = _bin_counts(base, singles)
        expected = np.append(exp_single, exp_tail)
        stat, p = stats.chisquare(observed, expected)
        return GofResult(float(stat), len(observed) - 1, float(p), tuple(observed.tolist()),
                         tuple(expected.tolist()))
    raise ValueError(f"unknown comparison {against!r}")


def williams_gap_report(
    n_values: Sequence[int], paths_per_n: int, rng: RngStream, quantiles=(0.5, 0.9, 0.99)
) -> list[dict]:
    """Quantiles of ``sup_{k<=n}(log C_k - B_k*)`` and ``sup_{k<=n}(B_k* - log a_k)``.

    A monitored statistic: it is reported, nothing is asserted about its size.
    """
    rows = []
    for idx, n in enumerate(n_values):
        for fam_idx, fam in enumerate("CA"):
            kind = ProcessKind(fam)
            sups = []
            for k, size in _chunks(paths_per_n):
                gen = rng.substream((idx * 2 + fam_idx) << 20 | k).generator()
                sups.append(williams_batch(kind, n, size, gen))
            sups = np.concatenate(sups)
            qs = np.quantile(sups, quantiles)
            row = {"family": fam, "n": int(n), "paths": int(paths_per_n), "min": float(sups.min())}
            row.update({f"q{round(q * 100)}": float(v) for q, v in zip(quantiles, qs)})
            rows.append(row)
    return rows
