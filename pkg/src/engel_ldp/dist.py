"""Exact truncated forward dynamic programming for the marginal laws.

Both kernels factor as ``p(i, j) = w(i) / (j (j - 1))`` with ``w(i) = i``
(C, j > i) or ``w(i) = i - 1`` (A, j >= i), so one step is a prefix sum:

    new[j] = (sum over admissible i of old[i] * w(i)) / (j (j - 1))

Mass leaving ``[1, J]`` from state ``i`` is exactly ``w(i) / J`` and never comes
back (the chains are monotone), so every tracked probability is exact up to
rounding no matter how small ``J`` is.

Probabilities are stored as ``scaled * 2**exponent`` with the array rescaled
by an exact power of two every step, which keeps log-probabilities down to
about -1e5 representable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .chains import ProcessKind
from .errors import DomainError, ResourceError, UnsupportedMethodError

__all__ = [
    "TruncatedDistribution",
    "LogMGFResult",
    "LemmaBracket",
    "forward_dp",
    "iter_forward_dp",
    "lower_threshold",
    "tail_prob_lower",
    "tail_probs_lower",
    "log_mgf",
    "lemma1_bracket",
    "DEFAULT_STATE_BUDGET",
]

LOG2 = math.log(2.0)
DEFAULT_STATE_BUDGET = 20_000_000


def _logsumexp(values) -> float:
    vals = [v for v in values if v != -math.inf]
    if not vals:
        return -math.inf
    m = max(vals)
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


@dataclass
class TruncatedDistribution:
    """Law of ``X_n`` on states ``<= cap`` plus the mass that has left.

    ``scaled[j] * 2**exponent`` is ``P(X_n = j)``; ``log_escape_weights[m-1]`` is
    ``log sum_{i <= cap} P(X_{m-1} = i) w(i)``, the escape intensity at step m.
    """

    kind: ProcessKind
    n: int
    cap: int
    scaled: np.ndarray
    exponent: int
    log_escaped: float
    log_escape_weights: list = field(default_factory=list)

    @property
    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.scaled) + self.exponent * LOG2

    def log_prob(self, j: int) -> float:
        if j < 0 or j > self.cap:
            raise IndexError(f"state {j} outside 0..{self.cap}")
        v = self.scaled[j]
        return math.log(v) + self.exponent * LOG2 if v > 0 else -math.inf

    def log_cdf(self, k: int) -> float:
        """``log P(X_n <= k)`` for ``k <= cap``."""
        if k > self.cap:
            raise IndexError(f"threshold {k} above cap {self.cap}")
        s = float(np.sum(self.scaled[: k + 1]))
        return math.log(s) + self.exponent * LOG2 if s > 0 else -math.inf

    def log_tracked_mass(self) -> float:
        return self.log_cdf(self.cap)

    def log_total_mass(self) -> float:
        """Should be 0 up to rounding."""
        return float(np.logaddexp(self.log_tracked_mass(), self.log_escaped))

    def rows(self, min_log_prob: float = -math.inf):
        """``(state, log_prob)`` pairs with nonzero probability."""
        lp = self.log_probs
        idx = np.flatnonzero(lp > min_log_prob)
        return [(int(j), float(lp[j])) for j in idx]


def iter_forward_dp(kind: ProcessKind, cap: int, n: int) -> Iterator[TruncatedDistribution]:
    """Yield the truncated law after each of ``n`` steps (arrays are reused; copy to keep)."""
    if cap < kind.initial + 1:
        raise DomainError(f"cap {cap} too small for initial state {kind.initial}")
    if n < 1:
        raise DomainError("n must be >= 1")
    j = np.arange(cap + 1, dtype=np.float64)
    w = j.copy() if kind.family == "C" else j - 1.0
    w[0] = 0.0
    if kind.family == "A":
        w[1] = 0.0
    inv = np.zeros(cap + 1)
    inv[2:] = 1.0 / (j[2:] * (j[2:] - 1.0))
    del j

    p = np.zeros(cap + 1)
    p[kind.initial] = 1.0
    exponent = 0
    log_escaped = -math.inf
    weights: list[float] = []
    buf = np.empty(cap + 1)
    for step in range(1, n + 1):
        np.multiply(p, w, out=buf)
        np.cumsum(buf, out=buf)
        total = float(buf[-1])
        lw = math.log(total) + exponent * LOG2
        weights.append(lw)
        log_escaped = float(np.logaddexp(log_escaped, lw - math.log(cap)))
        if kind.family == "C":
            # strict: new[j] uses i < j
            np.multiply(buf[:-1], inv[1:], out=p[1:])
            p[0] = 0.0
        else:
            np.multiply(buf, inv, out=p)
        top = float(p.max())
        if top > 0:
            e = math.frexp(top)[1]
            if e:
                np.ldexp(p, -e, out=p)
                exponent += e
        yield TruncatedDistribution(kind, step, cap, p, exponent, log_escaped, list(weights))


def forward_dp(kind: ProcessKind, n: int, cap: int) -> TruncatedDistribution:
    """Exact law of ``X_n`` on ``{1, ..., cap}`` with escaped mass."""
    last = None
    for last in iter_forward_dp(kind, cap, n):
        pass
    last.scaled = last.scaled.copy()
    return last


def lower_threshold(n: int, x: float, budget: int = DEFAULT_STATE_BUDGET) -> int:
    """``K = floor(exp(n (1 + x)))``: the event ``(log X_n - n)/n <= x`` is ``X_n <= K``.

    Levels within a relative 1e-12 of an integer count as reaching it, so that
    ``x = log(2)/n - 1`` gives ``K = 2`` despite rounding in ``log``.
    """
    t = n * (1.0 + x)
    if t > math.log(budget) + 1.0:
        raise ResourceError(
            f"threshold exp({t:.3f}) exceeds the state budget {budget}; use smaller n or x"
        )
    k = math.floor(math.exp(t) * (1.0 + 1e-12))
    if k > budget:
        raise ResourceError(f"threshold {k} exceeds the state budget {budget}; use smaller n or x")
    return k


def tail_prob_lower(
    kind: ProcessKind, n: int, x: float, budget: int = DEFAULT_STATE_BUDGET
) -> float:
    """Exact ``log P((log X_n - n)/n <= x)``."""
    return tail_probs_lower(kind, [n], x, budget)[n]


def tail_probs_lower(
    kind: ProcessKind, ns: Sequence[int], x: float, budget: int = DEFAULT_STATE_BUDGET
) -> dict:
    """Lower-tail log-probabilities for several ``n`` from one DP run.

    The cap only needs to cover the largest threshold: states below the cap
    are unaffected by truncation.
    """
    ns = sorted(set(int(v) for v in ns))
    ks = {m: lower_threshold(m, x, budget) for m in ns}
    for m, k in ks.items():
        if k < kind.initial:
            raise DomainError(f"threshold {k} at n={m} is below the initial state")
    cap = max(max(ks.values()), kind.initial + 1)
    out = {}
    for dist in iter_forward_dp(kind, cap, ns[-1]):
        if dist.n in ks:
            out[dist.n] = dist.log_cdf(ks[dist.n])
    return out


@dataclass(frozen=True)
class LogMGFResult:
    kind: ProcessKind
    n: int
    theta: float
    log_value: float
    error_bound: float
    cap: int
    log_truncated: float

    @property
    def rate(self) -> float:
        """``(1/n) log E(X_n^theta)``."""
        return self.log_value / self.n

    def to_json(self) -> dict:
        return {
            "kind": self.kind.label(),
            "n": self.n,
            "theta": self.theta,
            "log_value": self.log_value,
            "error_bound": self.error_bound,
            "cap": self.cap,
            "log_truncated": self.log_truncated,
        }


def _escape_tail_bracket(theta: float, cap: int) -> tuple[float, float]:
    """Bracket for ``T = sum_{k > cap} k**theta / (k (k - 1))`` (theta <= 0)."""
    if theta == 0.0:
        t = 1.0 / cap
        return t, t
    J = float(cap)
    lo = (J + 1.0) ** (theta - 1.0) / (1.0 - theta)
    hi = min((J + 1.0) ** theta / J, (1.0 + 1.0 / J) * J ** (theta - 1.0) / (1.0 - theta))
    return lo, hi


def _future_factor_bracket(kind: ProcessKind, theta: float, cap: int, n: int) -> tuple[float, float]:
    """Relative bracket for ``E(X_{m+k}^theta | X_m = s) / (s^theta rho^k)``, any s > cap.

    From the coupling ``X_l = floor(w(X_{l-1}) / U_l) + 1``: writing
    ``P_k = U_1 ... U_k``, the C-chain satisfies ``s/P_k < X_k <= (s + S)/P_k``
    with ``S = sum_l P_l``, and ``E(P_k^-theta S) <= (1 - theta) rho^k``.  The
    A-chain satisfies ``(s - S')/P_k < X_k <= s/P_k`` with ``S' <= k`` and
    ``E(P_k^-theta S') <= (2 - theta) rho^k``.
    """
    if theta == 0.0:
        return 1.0, 1.0
    J = float(cap)
    if kind.family == "C":
        return 1.0 + theta * (1.0 - theta) / J, 1.0
    ymax = n / J
    if ymax >= 1.0:
        raise DomainError("cap must exceed n for the A-chain escape bracket")
    slope = ((1.0 - ymax) ** theta - 1.0) / ymax
    return 1.0, 1.0 + slope * (2.0 - theta) / J


def log_mgf(kind: ProcessKind, n: int, theta: float, cap: int = 1_000_000) -> LogMGFResult:
    """Bracketed ``log E(X_n^theta)`` for ``theta <= 0`` by truncated DP.

    States ``<= cap`` are summed exactly.  Mass that escapes at step ``m`` is
    carried forward with rigorous two-sided bounds: the escape step contributes
    ``w(i) * T`` with ``T`` bracketed by integral comparison, and the remaining
    ``n - m`` steps multiply by ``rho = 1/(1 - theta)`` per step up to a factor
    ``1 + O(1/cap)``.  ``log_value`` is the lower end; the true value lies in
    ``[log_value, log_value + error_bound]``.
    """
    theta = float(theta)
    if theta > 0:
        raise UnsupportedMethodError(
            "theta > 0 has no truncation bound by this method; use Monte Carlo"
        )
    dist = forward_dp(kind, n, cap)
    j = np.arange(cap + 1, dtype=np.float64)
    j[0] = 1.0
    powered = dist.scaled * np.exp(theta * np.log(j))
    s = float(np.sum(powered))
    log_trunc = math.log(s) + dist.exponent * LOG2 if s > 0 else -math.inf

    t_lo, t_hi = _escape_tail_bracket(theta, cap)
    f_lo, f_hi = _future_factor_bracket(kind, theta, cap, n)
    log_rho = -math.log1p(-theta)
    esc = [lw + (n - m) * log_rho for m, lw in enumerate(dist.log_escape_weights, start=1)]
    log_esc = _logsumexp(esc)
    log_lo = float(np.logaddexp(log_trunc, log_esc + math.log(t_lo * f_lo)))
    log_hi = float(np.logaddexp(log_trunc, log_esc + math.log(t_hi * f_hi)))
    return LogMGFResult(kind, n, theta, log_lo, max(log_hi - log_lo, 0.0), cap, log_trunc)


@dataclass(frozen=True)
class LemmaBracket:
    """Bounds ``lower <= value <= upper`` on ``sum_{k>j} j/(k(k-1)) (k/j)^theta``.

    ``value_lo``/``value_hi`` enclose the series rigorously (partial sum plus an
    integral tail bracket); ``value`` is their midpoint.
    """

    j: int
    theta: float
    lower: float
    value: float
    upper: float
    value_lo: float
    value_hi: float
    truncation: int

    @property
    def holds(self) -> bool:
        return self.lower <= self.value_lo and self.value_hi <= self.upper

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "theta": self.theta,
            "lower": self.lower,
            "value": self.value,
            "upper": self.upper,
            "value_lo": self.value_lo,
            "value_hi": self.value_hi,
            "truncation": self.truncation,
            "holds": self.holds,
        }


def lemma1_bracket(j: int, theta: float, truncation: "int | None" = None) -> LemmaBracket:
    """Check the two-sided bound on the one-step C moment ratio from state ``j``.

    ``(1 + 1/j)**(theta - 1) / (1 - theta) <= S <= (1 + 1/j) / (1 - theta)`` where
    ``S = sum_{k>j} j/(k(k-1)) (k/j)^theta``.
    """
    theta = float(theta)
    if theta >= 1:
        raise DomainError("series diverges for theta >= 1")
    if j < 1:
        raise DomainError("j must be >= 1")
    K = truncation if truncation is not None else max(10**7 // j, 1000 * j)
    if K <= j:
        raise DomainError("truncation must exceed j")
    k = np.arange(j + 1, K + 1, dtype=np.float64)
    lj = math.log(j)
    terms = np.exp(lj - np.log(k) - np.log(k - 1.0) + theta * (np.log(k) - lj))
    partial = math.fsum(terms.tolist()) if K - j < 200_000 else float(np.sum(terms))

    # sum_{k>K} j^(1-theta) k^(theta-2) * k/(k-1), with k/(k-1) in (1, 1 + 1/K]
    scale = j ** (1.0 - theta)
    Kf = float(K)
    tail_lo = scale * max(
        (Kf + 1.0) ** (theta - 1.0) / (1.0 - theta),
        Kf ** (theta - 1.0) / (1.0 - theta) - Kf ** (theta - 2.0),
    )
    tail_hi = scale * (1.0 + 1.0 / Kf) * Kf ** (theta - 1.0) / (1.0 - theta)
    # floating-point summation allowance
    slack = 1e-12 * partial
    value_lo = partial + tail_lo - slack
    value_hi = partial + tail_hi + slack
    lower = (1.0 + 1.0 / j) ** (theta - 1.0) / (1.0 - theta)
    upper = (1.0 + 1.0 / j) / (1.0 - theta)
    out = LemmaBracket(
        j, theta, lower, 0.5 * (value_lo + value_hi), upper, value_lo, value_hi, K
    )
    if not out.holds:
        raise AssertionError(f"moment bracket violated: {out}")
    return out
