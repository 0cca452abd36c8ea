import logging
from fractions import Fraction
from functools import singledispatch
from itertools import islice
from typing import Iterator, Optional, Tuple

import config
from exceptions import PreconditionError
from models import EventuallyPeriodicBits, MapParams, NuEstimate, OrbitResult, TwoAdicWord
from services.exactnum import RationalLike, as_two_adic

logger = logging.getLogger(__name__)


def _step(p: MapParams, numerator: int, denominator: int) -> int:
    if numerator & 1:
        return (p.m * numerator + p.r * denominator) >> 1
    return numerator >> 1


def t_apply(p: MapParams, x: RationalLike) -> Fraction:
    x = as_two_adic(x)
    return Fraction(_step(p, x.numerator, x.denominator), x.denominator)


def iterate_parities(p: MapParams, x: RationalLike) -> Iterator[Tuple[int, int]]:
    x = as_two_adic(x)
    numerator, denominator = x.numerator, x.denominator
    while True:
        yield numerator, numerator & 1
        numerator = _step(p, numerator, denominator)


def orbit(
    p: MapParams,
    x: RationalLike,
    budget: int = config.ORBIT_BUDGET,
    magnitude_cap_bits: Optional[int] = config.MAGNITUDE_CAP_BITS,
) -> OrbitResult:
    if budget < 1:
        raise PreconditionError(f"orbit budget must be at least 1, got {budget}")
    x = as_two_adic(x)
    denominator = x.denominator
    numerator = x.numerator
    cap = None if magnitude_cap_bits is None else 1 << magnitude_cap_bits

    seen = {numerator: 0}
    numerators = [numerator]
    parity_bits = [numerator & 1]

    for step in range(1, budget + 1):
        numerator = _step(p, numerator, denominator)
        numerators.append(numerator)
        parity_bits.append(numerator & 1)

        if numerator in seen:
            entry = seen[numerator]
            return OrbitResult(
                params=p,
                denominator=denominator,
                numerators=tuple(numerators),
                parity_bits=tuple(parity_bits),
                cycle=(entry, step - entry),
            )
        seen[numerator] = step

        if cap is not None and abs(numerator) > cap:
            logger.debug("orbit of %s under %s passed 2^%d after %d steps", x, p, magnitude_cap_bits, step)
            return OrbitResult(
                params=p,
                denominator=denominator,
                numerators=tuple(numerators),
                parity_bits=tuple(parity_bits),
                budget_exhausted=True,
                overflowed=True,
            )

    logger.debug("orbit of %s under %s found no cycle within %d steps", x, p, budget)
    return OrbitResult(
        params=p,
        denominator=denominator,
        numerators=tuple(numerators),
        parity_bits=tuple(parity_bits),
        budget_exhausted=True,
    )


def q_truncated(p: MapParams, x: RationalLike, k: int) -> TwoAdicWord:
    if k < 0:
        raise PreconditionError(f"k must be nonnegative, got {k}")
    residue = 0
    for i, (_, t) in enumerate(islice(iterate_parities(p, x), k)):
        residue |= t << i
    return TwoAdicWord(residue, k)


def parity_expansion(result: OrbitResult) -> Optional[EventuallyPeriodicBits]:
    """Q_{m,r}(x) read off a cyclic orbit; None when the orbit did not close."""
    if not result.is_cyclic:
        return None
    entry, length = result.cycle
    return EventuallyPeriodicBits(
        result.parity_bits[:entry],
        result.parity_bits[entry:entry + length],
    )


def q_exact(
    p: MapParams,
    x: RationalLike,
    budget: int = config.ORBIT_BUDGET,
    magnitude_cap_bits: Optional[int] = config.MAGNITUDE_CAP_BITS,
) -> Optional[EventuallyPeriodicBits]:
    return parity_expansion(orbit(p, x, budget, magnitude_cap_bits))


def sigma_shift(b: EventuallyPeriodicBits) -> EventuallyPeriodicBits:
    if b.preperiod:
        return EventuallyPeriodicBits(b.preperiod[1:], b.period)
    return EventuallyPeriodicBits((), b.period[1:] + b.period[:1])


@singledispatch
def v_complement(value):
    raise TypeError(f"cannot complement {type(value).__name__}")


@v_complement.register
def _(value: Fraction) -> Fraction:
    return -1 - as_two_adic(value)


@v_complement.register
def _(value: int) -> Fraction:
    return Fraction(-1 - value)


@v_complement.register
def _(value: EventuallyPeriodicBits) -> EventuallyPeriodicBits:
    return EventuallyPeriodicBits(
        tuple(1 - b for b in value.preperiod),
        tuple(1 - b for b in value.period),
    )


@v_complement.register
def _(value: TwoAdicWord) -> TwoAdicWord:
    return TwoAdicWord(value.modulus - 1 - value.residue, value.precision)


def nu_estimate(
    p: MapParams,
    x: RationalLike,
    k: int,
    budget: int = config.CYCLE_PROBE_BUDGET,
) -> NuEstimate:
    """Density of even iterates.

    Exact (the liminf itself) when the orbit cycles within budget; otherwise
    the average over the first k steps, which is only a proxy for the liminf.
    """
    if k < 1:
        raise PreconditionError(f"density window must be at least 1, got {k}")
    result = orbit(p, x, budget)
    if result.is_cyclic:
        entry, length = result.cycle
        period = result.parity_bits[entry:entry + length]
        return NuEstimate(Fraction(period.count(0), length), exact=True, window=length)

    evens = sum(1 for _, t in islice(iterate_parities(p, x), k) if t == 0)
    return NuEstimate(Fraction(evens, k), exact=False, window=k)
