"""Rationals with odd denominator viewed as 2-adic integers."""
import logging
import re
from fractions import Fraction
from math import isqrt
from typing import Optional, Union

from exceptions import NotTwoAdicIntegerError, PrecisionError, UsageError
from models import EventuallyPeriodicBits, TwoAdicWord

logger = logging.getLogger(__name__)

RATIONAL_PATTERN = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+))?\s*$")

RationalLike = Union[Fraction, int, str]


def parse_rational(text: str) -> Fraction:
    match = RATIONAL_PATTERN.match(text)
    if not match:
        raise UsageError(f"malformed rational literal {text!r}; expected 'a/b' or an integer")
    numerator = int(match.group(1))
    denominator = int(match.group(2)) if match.group(2) else 1
    if denominator == 0:
        raise UsageError(f"zero denominator in {text!r}")
    return Fraction(numerator, denominator)


def as_two_adic(x: RationalLike) -> Fraction:
    if isinstance(x, str):
        x = parse_rational(x)
    x = Fraction(x)
    if x.denominator % 2 == 0:
        raise NotTwoAdicIntegerError(x)
    return x


def parity(x: RationalLike) -> int:
    # a/b with b odd: a * b^-1 = a (mod 2)
    return as_two_adic(x).numerator & 1


def valuation(x: RationalLike) -> Optional[int]:
    x = as_two_adic(x)
    if x == 0:
        return None
    n = x.numerator
    return (n & -n).bit_length() - 1


def rational_to_bits(x: RationalLike) -> EventuallyPeriodicBits:
    x = as_two_adic(x)
    numerator, denominator = x.numerator, x.denominator
    seen = {}
    bits = []
    while numerator not in seen:
        seen[numerator] = len(bits)
        bit = numerator & 1
        bits.append(bit)
        numerator = (numerator - bit * denominator) // 2
    start = seen[numerator]
    return EventuallyPeriodicBits(tuple(bits[:start]), tuple(bits[start:]))


def _bits_value(bits) -> int:
    return sum(b << i for i, b in enumerate(bits))


def bits_to_rational(b: EventuallyPeriodicBits) -> Fraction:
    head = _bits_value(b.preperiod)
    cycle = Fraction(_bits_value(b.period), 1 - (1 << len(b.period)))
    return head + (1 << len(b.preperiod)) * cycle


def residue_of(x: RationalLike, k: int) -> TwoAdicWord:
    """x mod 2^k for a rational with odd denominator."""
    x = as_two_adic(x)
    if k < 0:
        raise PrecisionError(f"precision must be nonnegative, got {k}")
    if k == 0:
        return TwoAdicWord(0, 0)
    modulus = 1 << k
    return TwoAdicWord(x.numerator * pow(x.denominator, -1, modulus) % modulus, k)


def truncate(b: EventuallyPeriodicBits, k: int) -> TwoAdicWord:
    return residue_of(bits_to_rational(b), k)


def max_admissible_bound(k: int) -> int:
    return isqrt(((1 << k) - 1) // 2)


def rational_reconstruct(w: TwoAdicWord, bound: int) -> Optional[Fraction]:
    """Find a/b with |a|, b <= bound, b odd and a = residue * b (mod 2^k).

    Runs the half-extended Euclidean algorithm on (2^k, residue), keeping
    r_i = s_i * residue (mod 2^k), and returns the first pair inside the
    bound with odd s_i. The answer is unique because 2 * bound^2 < 2^k.
    """
    if w.precision < 2:
        raise PrecisionError(f"reconstruction needs precision >= 2, got {w.precision}")
    if bound < 1 or 2 * bound * bound >= w.modulus:
        raise PrecisionError(
            f"bound {bound} too large for precision {w.precision} (need 2*bound^2 < 2^{w.precision})"
        )

    modulus = w.modulus
    r0, r1 = modulus, w.residue
    s0, s1 = 0, 1
    while True:
        if abs(s1) > bound:
            return None
        if r1 <= bound and s1 % 2 == 1:
            a, b = (r1, s1) if s1 > 0 else (-r1, -s1)
            if (a - w.residue * b) % modulus == 0:
                return Fraction(a, b)
        if r1 == 0:
            return None
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        s0, s1 = s1, s0 - q * s1
