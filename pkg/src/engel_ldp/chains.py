"""Samplers for C-processes and A-processes, and record-time extraction.

Three constructions are provided and cross-checked in ``experiments``:

* the closed-form kernel step ``floor(w(i)/u) + 1`` with ``w(i) = i`` (C) or
  ``i - 1`` (A), obtained by inverting the kernel tail ``P(next > j) = w(i)/j``;
* the exponential-increment (Williams) coupling ``C_n = [C_{n-1} e^W] + 1``,
  ``a_n = [a_{n-1} e^W]``;
* digit extraction from a uniformly random real (see :mod:`engel_ldp.engel`).

Scalar samplers work on Python integers and are exact.  The ``*_batch``
functions are vectorised float versions used for Monte Carlo at 10^6 paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .engel import CertifiedExpander, DigitSequence, ExpansionKind
from .errors import DomainError, ResourceError, UnsupportedMethodError
from .rng import RngStream

__all__ = [
    "ProcessKind",
    "ProcessPath",
    "CoupledPath",
    "step_c",
    "step_a",
    "step",
    "sample_path_transition",
    "sample_path_williams",
    "williams_path",
    "record_times",
    "record_times_batch",
    "sample_digits_uniform",
    "simulate_batch",
    "williams_batch",
    "C_PROCESS",
    "A_PROCESS",
]

# float states are exact integers below this; past it only log-states are kept
EXACT_LIMIT = 2.0**52


@dataclass(frozen=True)
class ProcessKind:
    family: str
    initial: "int | None" = None

    def __post_init__(self):
        fam = str(self.family).upper()
        if fam not in ("C", "A"):
            raise DomainError(f"unknown family {self.family!r}")
        object.__setattr__(self, "family", fam)
        init = self.initial
        if init is None:
            init = 1 if fam == "C" else 2
        init = int(init)
        if fam == "C" and init < 1:
            raise DomainError("C-process needs C_0 >= 1")
        if fam == "A" and init < 2:
            raise DomainError("A-process needs A_0 >= 2")
        object.__setattr__(self, "initial", init)

    @property
    def is_default(self) -> bool:
        return self.initial == (1 if self.family == "C" else 2)

    def weight(self, i: int) -> int:
        """Kernel weight: P(next > j | i) = weight(i) / j."""
        return i if self.family == "C" else i - 1

    def label(self) -> str:
        return f"{self.family}{self.initial}"


C_PROCESS = ProcessKind("C")
A_PROCESS = ProcessKind("A")


def _as_ratio(u) -> tuple[int, int]:
    if isinstance(u, Fraction):
        return u.numerator, u.denominator
    return float(u).as_integer_ratio()


def step_c(i: int, u) -> int:
    """One C-step from state ``i`` driven by ``u`` in (0, 1]: ``floor(i/u) + 1``.

    ``u`` may be a float or a ``Fraction``; the floor is taken exactly.

    >>> step_c(5, 0.5)
    11
    """
    if i < 1:
        raise DomainError(f"C state must be >= 1, got {i}")
    num, den = _as_ratio(u)
    if num <= 0 or num > den:
        raise DomainError(f"u = {u} outside (0, 1]")
    return (i * den) // num + 1


def step_a(i: int, u) -> int:
    """One A-step from state ``i``: ``floor((i-1)/u) + 1``; stays put with probability 1/i."""
    if i < 2:
        raise DomainError(f"A state must be >= 2, got {i}")
    num, den = _as_ratio(u)
    if num <= 0 or num > den:
        raise DomainError(f"u = {u} outside (0, 1]")
    return ((i - 1) * den) // num + 1


def step(kind: ProcessKind, i: int, u) -> int:
    return step_c(i, u) if kind.family == "C" else step_a(i, u)


@dataclass(frozen=True)
class ProcessPath:
    kind: ProcessKind
    states: tuple[int, ...]

    def __post_init__(self):
        s = self.states
        if not s:
            raise ValueError("empty path")
        for a, b in zip(s, s[1:]):
            if self.kind.family == "C" and b < a + 1:
                raise AssertionError(f"C path not strictly increasing: {a} -> {b}")
            if self.kind.family == "A" and b < a:
                raise AssertionError(f"A path decreased: {a} -> {b}")

    @property
    def log_states(self) -> list[float]:
        return [math.log(x) for x in self.states]

    def to_json(self, seed=None, stream=None) -> str:
        return json.dumps(
            {
                "kind": self.kind.label(),
                "seed": seed,
                "stream": stream,
                "states": [str(x) for x in self.states],
                "log_state": self.log_states,
            },
            sort_keys=True,
        )


@dataclass(frozen=True)
class CoupledPath:
    """A default-start path together with its exponential increments.

    ``uniforms`` holds the exact dyadic variates with ``W_n = -log u_n``, so
    ``exp(W_n) = 1/u_n`` exactly and the floor recursions are evaluated without
    rounding.  ``increments`` and ``partial_sums`` are their float images.
    """

    kind: ProcessKind
    uniforms: tuple[Fraction, ...]
    increments: tuple[float, ...]
    partial_sums: tuple[float, ...]
    states: tuple[int, ...]

    def path(self) -> ProcessPath:
        return ProcessPath(self.kind, self.states)

    def coupling_violations(self) -> int:
        """Count n >= 1 breaking log C_n > B_n* (C) or log a_n <= B_n* (A), exactly.

        ``B_n* = -log(u_1 ... u_n)``, so the checks reduce to integer
        comparisons of ``state * prod(u)`` against 1.
        """
        bad = 0
        num, den = 1, 1
        for n, u in enumerate(self.uniforms, start=1):
            num *= u.numerator
            den *= u.denominator
            x = self.states[n]
            if self.kind.family == "C":
                ok = x * num > den
            else:
                ok = (x - 1) * num <= den
            bad += not ok
        return bad


def _uniform(bits, exact_bits):
    return bits.uniform() if exact_bits is None else bits.uniform_exact(exact_bits)


def sample_path_transition(
    kind: ProcessKind, n: int, rng: RngStream, exact_bits: "int | None" = None
) -> ProcessPath:
    """Iterate the closed-form step ``n`` times from ``kind.initial``.

    With ``exact_bits`` set, each variate is a ``exact_bits``-bit random rational
    instead of a 53-bit float.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    bits = rng.bits()
    states = [kind.initial]
    for _ in range(n):
        states.append(step(kind, states[-1], _uniform(bits, exact_bits)))
    return ProcessPath(kind, tuple(states))


def williams_path(kind: ProcessKind, uniforms: Sequence) -> CoupledPath:
    """Build the coupled path driven by given variates ``u_n = exp(-W_n)``.

    >>> williams_path(C_PROCESS, [Fraction(1, 3)]).states
    (1, 4)
    """
    if not kind.is_default:
        raise UnsupportedMethodError(
            "the exponential-increment representation is only defined for C_0 = 1 / A_0 = 2"
        )
    us, ws, sums = [], [], []
    total = 0.0
    # track C_n (family C) or a_n = A_n - 1 (family A)
    y = 1
    states = [kind.initial]
    for u in uniforms:
        u = Fraction(u)
        if not 0 < u <= 1:
            raise DomainError(f"u = {u} outside (0, 1]")
        w = -math.log(u)
        total += w
        us.append(u)
        ws.append(w)
        sums.append(total)
        scaled = (y * u.denominator) // u.numerator
        if kind.family == "C":
            y = scaled + 1
            states.append(y)
        else:
            y = scaled
            states.append(y + 1)
    return CoupledPath(kind, tuple(us), tuple(ws), tuple(sums), tuple(states))


def sample_path_williams(kind: ProcessKind, n: int, rng: RngStream) -> CoupledPath:
    """Williams' exponential-increment representation from the default start."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if not kind.is_default:
        raise UnsupportedMethodError(
            "the exponential-increment representation is only defined for C_0 = 1 / A_0 = 2"
        )
    bits = rng.bits()
    return williams_path(kind, [Fraction(bits.uniform()) for _ in range(n)])


def record_times(stream: Iterable[float]) -> ProcessPath:
    """Indices (1-based) of strict running maxima: ``[1, L_1, L_2, ...]``.

    >>> record_times([0.3, 0.1, 0.5, 0.4, 0.9]).states
    (1, 3, 5)
    """
    it = iter(stream)
    try:
        best = next(it)
    except StopIteration:
        raise DomainError("record_times needs a non-empty stream") from None
    times = [1]
    for j, x in enumerate(it, start=2):
        if x > best:
            best = x
            times.append(j)
    return ProcessPath(C_PROCESS, tuple(times))


def record_times_batch(block: np.ndarray) -> list[np.ndarray]:
    """Record times for each row of a 2-D array (rows are independent streams)."""
    block = np.asarray(block)
    prev_max = np.maximum.accumulate(block, axis=1)[:, :-1]
    is_rec = np.empty(block.shape, dtype=bool)
    is_rec[:, 0] = True
    is_rec[:, 1:] = block[:, 1:] > prev_max
    return [np.flatnonzero(row) + 1 for row in is_rec]


def sample_digits_uniform(
    kind: "ExpansionKind | str",
    n_digits: int,
    rng: RngStream,
    bit_budget: int = 4096,
    chunk_bits: int = 64,
) -> DigitSequence:
    """Certified digits of a uniform random real, drawing random bits on demand.

    Raises ``ResourceError`` (with the digits obtained in ``.partial``) if
    ``bit_budget`` bits do not certify ``n_digits`` digits.
    """
    if n_digits < 1:
        raise DomainError("n_digits must be >= 1")
    bits = rng.bits()
    exp = CertifiedExpander(kind)
    value, used = 0, 0
    while len(exp.digits) < n_digits:
        if used >= bit_budget:
            raise ResourceError(
                f"bit budget {bit_budget} exhausted after {len(exp.digits)} digits",
                partial=exp.result(),
            )
        take = min(chunk_bits, bit_budget - used)
        value = (value << take) | bits.randbits(take)
        used += take
        lower = Fraction(value, 1 << used)
        upper = Fraction(value + 1, 1 << used)
        if lower == 0 or upper == 1:
            continue
        exp.feed(lower, upper, n_digits)
    return exp.result()


def _weights(kind: ProcessKind, s: np.ndarray) -> np.ndarray:
    return s if kind.family == "C" else s - 1.0


def simulate_batch(
    kind: ProcessKind,
    n: int,
    size: int,
    gen: np.random.Generator,
    snapshots: "Sequence[int] | None" = None,
    method: str = "transition",
):
    """Vectorised paths, returning ``{step: (states, log_states)}`` at ``snapshots``.

    ``states`` holds exact integer values while below 2**52 and ``inf`` after;
    from then on only ``log_states`` evolves (``log s - log u``, relative error
    below 2**-52 per step).  ``method="williams"`` forms ``floor(w * exp(W))``
    with ``W = -log u`` instead of ``floor(w / u)``.
    """
    if method not in ("transition", "williams"):
        raise ValueError(f"unknown method {method!r}")
    if method == "williams" and not kind.is_default:
        raise UnsupportedMethodError("williams batch needs the default start")
    wanted = set(snapshots) if snapshots is not None else {n}
    out = {}
    s = np.full(size, float(kind.initial))
    logs = np.full(size, math.log(kind.initial))
    big = np.zeros(size, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            u = 1.0 - gen.random(size)
            w = _weights(kind, s)
            if method == "transition":
                y = w / u
            else:
                y = w * np.exp(-np.log(u))
            new = np.floor(y) + 1.0
            logs = np.where(big, logs - np.log(u), np.log(new))
            big |= ~(new < EXACT_LIMIT)
            s = np.where(big, np.inf, new)
            if k in wanted:
                out[k] = (s.copy(), logs.copy())
    return out


def williams_batch(kind: ProcessKind, n: int, size: int, gen: np.random.Generator):
    """Running suprema of the coupling gaps over ``k <= n`` for ``size`` paths.

    Returns ``sup_k (log C_k - B_k*)`` for family C and ``sup_k (B_k* - log a_k)``
    for family A.
    """
    if not kind.is_default:
        raise UnsupportedMethodError("williams coupling needs the default start")
    y = np.ones(size)
    logy = np.zeros(size)
    big = np.zeros(size, dtype=bool)
    b = np.zeros(size)
    sup = np.full(size, -np.inf)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(n):
            w = -np.log(1.0 - gen.random(size))
            b += w
            scaled = np.floor(y * np.exp(w))
            new = scaled + 1.0 if kind.family == "C" else scaled
            logy = np.where(big, logy + w, np.log(new))
            big |= ~(new < EXACT_LIMIT)
            y = np.where(big, np.inf, new)
            gap = logy - b if kind.family == "C" else b - logy
            np.maximum(sup, gap, out=sup)
    return sup
