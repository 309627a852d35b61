"""Engel and modified Engel expansions over exact rationals.

Both expansions share the digit map ``u -> ceil(1/u)`` on left-closed cells
``[1/d, 1/(d-1))`` and differ only in the remainder map:

* Engel:          ``u' = d*u - 1``
* modified Engel: ``u' = (d - 1)*(u - 1/d)``

Everything here is exact integer/rational arithmetic; no floats.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import DomainError

__all__ = [
    "ExpansionKind",
    "DigitSequence",
    "DyadicInterval",
    "engel_expand",
    "modified_engel_expand",
    "expand",
    "reconstruct",
    "expand_certified",
    "CertifiedExpander",
    "parse_rational",
    "dyadic_enclosure",
]


class ExpansionKind(str, enum.Enum):
    ENGEL = "ENGEL"
    MODIFIED_ENGEL = "MODIFIED_ENGEL"

    @classmethod
    def parse(cls, value: "str | ExpansionKind") -> "ExpansionKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        aliases = {"MODIFIED": "MODIFIED_ENGEL", "RENYI": "MODIFIED_ENGEL"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class DigitSequence:
    kind: ExpansionKind
    digits: tuple[int, ...]
    terminated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(int(d) for d in self.digits))
        check_digits(self.kind, self.digits)

    def __len__(self):
        return len(self.digits)

    def to_json(self) -> dict:
        """Digits as decimal strings; they leave the 64-bit range fast."""
        return {
            "kind": self.kind.value,
            "digits": [str(d) for d in self.digits],
            "terminated": self.terminated,
        }

    @classmethod
    def from_json(cls, obj: "dict | str") -> "DigitSequence":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(
            ExpansionKind.parse(obj["kind"]),
            tuple(int(d) for d in obj["digits"]),
            bool(obj["terminated"]),
        )


def check_digits(kind: ExpansionKind, digits) -> None:
    """Raise ``ValueError`` unless ``digits`` obey the ordering rule of ``kind``."""
    prev = None
    for d in digits:
        if d < 2:
            raise ValueError(f"digit {d} < 2")
        if prev is not None:
            if kind is ExpansionKind.ENGEL and d < prev:
                raise ValueError(f"Engel digits must be non-decreasing: {prev} then {d}")
            if kind is ExpansionKind.MODIFIED_ENGEL and d < prev + 1:
                raise ValueError(f"modified Engel digits must increase: {prev} then {d}")
        prev = d


@dataclass(frozen=True)
class DyadicInterval:
    """The closed interval ``[lower, lower + 2**-bits]`` with dyadic ``lower``."""

    lower: Fraction
    bits: int
    upper: Fraction = field(init=False)

    def __post_init__(self):
        lower = Fraction(self.lower)
        if self.bits < 0:
            raise ValueError("bits must be >= 0")
        if (lower * (1 << self.bits)).denominator != 1:
            raise ValueError("lower endpoint is not a multiple of 2**-bits")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", lower + Fraction(1, 1 << self.bits))
        if not (0 <= self.lower and self.upper <= 1):
            raise ValueError("dyadic interval must lie in [0, 1]")

    @classmethod
    def from_bits(cls, value: int, bits: int) -> "DyadicInterval":
        """Interval selected by the binary prefix ``value`` of length ``bits``."""
        return cls(Fraction(value, 1 << bits), bits)

    def contains(self, x) -> bool:
        return self.lower <= x <= self.upper


def parse_rational(text: "str | int | Fraction") -> Fraction:
    """Parse ``"p/q"`` (or an integer). Decimal points are rejected."""
    if isinstance(text, (int, Fraction)):
        return Fraction(text)
    s = str(text).strip()
    if "." in s or "e" in s.lower():
        raise ValueError(f"expected an exact rational 'p/q', got {text!r}")
    return Fraction(s)


def _check_unit(x: Fraction) -> None:
    if not (0 < x < 1):
        raise DomainError(f"x = {x} is outside (0, 1)")


def _digit(u: Fraction) -> int:
    # ceil(q/p) for u = p/q > 0
    return -(-u.denominator // u.numerator)


def _remainder(kind: ExpansionKind, u: Fraction, d: int) -> Fraction:
    if kind is ExpansionKind.ENGEL:
        return d * u - 1
    return (d - 1) * (u - Fraction(1, d))


def expand(x, kind: "ExpansionKind | str", max_digits: int) -> DigitSequence:
    """Greedy expansion of ``x`` in (0, 1) with at most ``max_digits`` digits."""
    kind = ExpansionKind.parse(kind)
    x = parse_rational(x)
    _check_unit(x)
    if max_digits < 1:
        raise ValueError("max_digits must be >= 1")
    digits = []
    u = x
    terminated = False
    while len(digits) < max_digits:
        d = _digit(u)
        digits.append(d)
        u = _remainder(kind, u, d)
        if u == 0:
            terminated = True
            break
    return DigitSequence(kind, tuple(digits), terminated)


def engel_expand(x, max_digits: int) -> DigitSequence:
    """Engel expansion ``x = 1/a1 + 1/(a1 a2) + ...``.

    >>> engel_expand(Fraction(7, 10), 10).digits
    (2, 3, 5)
    """
    return expand(x, ExpansionKind.ENGEL, max_digits)


def modified_engel_expand(x, max_digits: int) -> DigitSequence:
    """Modified Engel expansion ``x = 1/d1 + 1/((d1-1) d2) + ...``.

    >>> modified_engel_expand(Fraction(3, 8), 10).digits
    (3, 12)
    """
    return expand(x, ExpansionKind.MODIFIED_ENGEL, max_digits)


def reconstruct(seq: DigitSequence, terms: "int | None" = None) -> Fraction:
    """Exact partial sum of the first ``terms`` series terms (all by default)."""
    if terms is None:
        terms = len(seq.digits)
    if terms < 1 or terms > len(seq.digits):
        raise IndexError(f"terms={terms} outside 1..{len(seq.digits)}")
    total = Fraction(0)
    # prefix is the product of the preceding denominators' factors
    prefix = 1
    for d in seq.digits[:terms]:
        total += Fraction(1, prefix * d)
        prefix *= d if seq.kind is ExpansionKind.ENGEL else d - 1
    return total


class CertifiedExpander:
    """Incremental certified digit extraction for a real known to lie in an interval.

    The expander keeps the exact affine map ``T(u) = alpha*u + beta`` sending the
    original point to its current remainder.  Feeding a narrower interval (more
    random bits) re-images it through ``T`` and emits digits while both image
    endpoints share one digit cell.  The digit map is monotone, so agreement at
    the endpoints certifies agreement on the whole interval.
    """

    def __init__(self, kind: "ExpansionKind | str"):
        self.kind = ExpansionKind.parse(kind)
        self.digits: list[int] = []
        self.alpha = Fraction(1)
        self.beta = Fraction(0)

    def feed(self, lower: Fraction, upper: Fraction, max_digits: int) -> int:
        """Emit certified digits for ``[lower, upper]``; return how many were added."""
        if not (0 < lower < upper < 1):
            raise DomainError("certified interval must lie strictly inside (0, 1)")
        lo = self.alpha * lower + self.beta
        hi = self.alpha * upper + self.beta
        added = 0
        while len(self.digits) < max_digits:
            if lo <= 0:
                # a terminating rational sits inside: digit undefined for it
                break
            d = _digit(lo)
            if _digit(hi) != d:
                break
            self.digits.append(d)
            added += 1
            if self.kind is ExpansionKind.ENGEL:
                scale, shift = d, Fraction(-1)
            else:
                scale, shift = d - 1, Fraction(-(d - 1), d)
            self.alpha, self.beta = scale * self.alpha, scale * self.beta + shift
            lo, hi = scale * lo + shift, scale * hi + shift
        return added

    def result(self) -> DigitSequence:
        return DigitSequence(self.kind, tuple(self.digits), False)


def expand_certified(
    interval: DyadicInterval, kind: "ExpansionKind | str", max_digits: int
) -> DigitSequence:
    """Digits shared by every point of ``interval``, at most ``max_digits`` of them."""
    if interval.lower <= 0 or interval.upper >= 1:
        raise DomainError("interval touches 0 or 1")
    exp = CertifiedExpander(kind)
    exp.feed(interval.lower, interval.upper, max_digits)
    return exp.result()


def dyadic_enclosure(x: Fraction, bits: int) -> DyadicInterval:
    """The width-``2**-bits`` dyadic interval whose lower end is ``floor(x * 2**bits)``."""
    x = Fraction(x)
    k = (x.numerator << bits) // x.denominator
    return DyadicInterval.from_bits(k, bits)
