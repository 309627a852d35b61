"""Rate functions, limiting log-MGFs and a numeric Legendre transform.

Extended reals are plain floats: ``math.inf`` is the distinguished +infinity
and follows IEEE arithmetic (``inf + finite == inf``, comparisons total).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .errors import DomainError

__all__ = [
    "RateFunctionSpec",
    "rate",
    "rate_c",
    "rate_a",
    "rate_a_initial",
    "log_mgf_closed",
    "lambda_c",
    "lambda_a",
    "ConjugationResult",
    "legendre_numeric",
    "conjugate",
    "compare_rates",
    "INF",
]

INF = math.inf
LOG2 = math.log(2.0)


def _x_minus_log1p(x: float) -> float:
    # series near 0 avoids cancellation: x^2/2 - x^3/3 + x^4/4 - ...
    if abs(x) < 1e-3:
        return x * x * (0.5 - x * (1.0 / 3.0 - x * (0.25 - x * (0.2 - x / 6.0))))
    return x - math.log1p(x)


def rate_c(x: float) -> float:
    """Rate of ``(log C_n - n)/n``: ``x - log(1 + x)`` on ``x > -1``."""
    if x <= -1.0:
        return INF
    return _x_minus_log1p(x)


def rate_a_initial(x: float, a: int) -> float:
    """Rate of ``(log A_n - n)/n`` for an A-process started at ``A_0 = a``."""
    if a < 2:
        raise DomainError("A_0 must be >= 2")
    if x < -1.0:
        return INF
    if x > -1.0 + 1.0 / a:
        return _x_minus_log1p(x)
    return (1 - a) * (x + 1.0) + math.log(a)


def rate_a(x: float) -> float:
    """``rate_a_initial(x, 2)``: linear ``log 2 - 1 - x`` on ``[-1, -1/2]``."""
    if x < -1.0:
        return INF
    if x > -0.5:
        return _x_minus_log1p(x)
    return -x - 1.0 + LOG2


@dataclass(frozen=True)
class RateFunctionSpec:
    family: str
    a: "int | None" = None

    def __post_init__(self):
        fam = str(self.family).upper()
        if fam not in ("C", "A"):
            raise DomainError(f"unknown family {self.family!r}")
        if self.a is not None and (fam != "A" or self.a < 2):
            raise DomainError("initial value a >= 2 applies to family A only")
        object.__setattr__(self, "family", fam)

    def __call__(self, x: float) -> float:
        return rate(self, x)


def rate(spec: "RateFunctionSpec | str", x: float) -> float:
    if isinstance(spec, str):
        spec = RateFunctionSpec(spec)
    if spec.family == "C":
        return rate_c(x)
    if spec.a is None or spec.a == 2:
        return rate_a(x)
    return rate_a_initial(x, spec.a)


def lambda_c(theta: float) -> float:
    if theta >= 1.0:
        return INF
    return -theta - math.log1p(-theta)


def lambda_a(theta: float) -> float:
    if theta >= 1.0:
        return INF
    if theta <= -1.0:
        return -theta - LOG2
    return -theta - math.log1p(-theta)


def log_mgf_closed(family: str, theta: float) -> float:
    """Limiting scaled log-MGF of ``(log X_n - n)/n`` for family ``"C"`` or ``"A"``."""
    fam = str(family).upper()
    if fam == "C":
        return lambda_c(theta)
    if fam == "A":
        return lambda_a(theta)
    raise DomainError(f"unknown family {family!r}")


@dataclass
class ConjugationResult:
    x: float
    supremum: float
    argmax_theta: float
    iterations: int
    certificates: list = field(default_factory=list, repr=False)

    def certified(self) -> bool:
        """``supremum >= theta*x - Lambda(theta)`` for every probe kept."""
        return all(self.supremum >= v for _, v in self.certificates)

    def to_json(self) -> str:
        return json.dumps(
            {
                "x": self.x,
                "supremum": self.supremum,
                "argmax_theta": self.argmax_theta,
                "iterations": self.iterations,
                "certificates": [[t, v] for t, v in self.certificates],
            }
        )


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def legendre_numeric(
    lam: Callable[[float], float],
    x: float,
    theta_domain: Sequence[float] = (-100.0, 100.0),
    grid: int = 401,
    tol: float = 1e-12,
    newton: bool = True,
) -> ConjugationResult:
    """``sup_theta {theta*x - lam(theta)}`` over ``theta_domain``.

    ``lam`` must be convex with values in (-inf, +inf].  A uniform probe grid
    brackets the maximiser of the concave objective, golden-section search
    narrows the bracket to ``tol``, and one safeguarded Newton step (central
    differences) refines smooth interior optima.  Kinks and boundary optima are
    handled by the bracketing alone.
    """
    lo, hi = float(theta_domain[0]), float(theta_domain[1])
    if not lo < hi:
        raise DomainError("empty theta domain")
    certs: list = []

    def obj(t: float) -> float:
        v = lam(t)
        val = -INF if v == INF else t * x - v
        certs.append((t, val))
        return val

    step = (hi - lo) / (grid - 1)
    probes = [lo + i * step for i in range(grid)]
    vals = [obj(t) for t in probes]
    best = max(range(grid), key=lambda i: vals[i])
    if vals[best] == -INF:
        raise DomainError("lambda is infinite on the whole theta domain")
    if vals[best] == INF:
        return ConjugationResult(x, INF, probes[best], 0, certs)

    a = probes[max(best - 1, 0)]
    b = probes[min(best + 1, grid - 1)]
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = obj(c), obj(d)
    it = 0
    while b - a > tol and it < 200:
        it += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLD * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLD * (b - a)
            fd = obj(d)

    t_best, f_best = max(certs, key=lambda tv: tv[1])
    if newton and lo < t_best < hi:
        h = 1e-5 * max(1.0, abs(t_best))
        fm, f0, fp = obj(t_best - h), f_best, obj(t_best + h)
        if all(math.isfinite(v) for v in (fm, fp)):
            d1 = (fp - fm) / (2 * h)
            d2 = (fp - 2 * f0 + fm) / (h * h)
            if d2 < 0:
                t_new = t_best - d1 / d2
                if a - h <= t_new <= b + h and lo <= t_new <= hi:
                    obj(t_new)
    t_best, f_best = max(certs, key=lambda tv: tv[1])
    return ConjugationResult(x, f_best, t_best, it, certs)


def conjugate(
    f: Callable[[float], float], domain: Sequence[float] = (-100.0, 100.0), **kw
) -> Callable[[float], float]:
    """Numeric convex conjugate ``y -> sup_t {t*y - f(t)}`` as a callable."""

    def fstar(y: float) -> float:
        return legendre_numeric(f, y, domain, **kw).supremum

    return fstar


def compare_rates(grid: Iterable[float]) -> list[tuple[float, float, float, float]]:
    """Rows ``(x, I_C, I_A, gap)``; ``gap = I_C - I_A`` with ``inf - finite = inf``.

    Where both rates are infinite (x < -1) the gap is reported as 0.
    """
    rows = []
    for x in grid:
        ic, ia = rate_c(x), rate_a(x)
        if ic == INF and ia == INF:
            gap = 0.0
        elif ic == INF:
            gap = INF
        else:
            gap = ic - ia
        rows.append((x, ic, ia, gap))
    return rows
