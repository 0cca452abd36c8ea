from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterator, Optional, Tuple

from mpmath import mpf

from exceptions import InvalidParamsError, PreconditionError


def _primitive_period(period: Tuple[int, ...]) -> Tuple[int, ...]:
    n = len(period)
    for d in range(1, n + 1):
        if n % d == 0 and period[:d] * (n // d) == period:
            return period[:d]
    return period


def canonicalize_bits(preperiod: Tuple[int, ...], period: Tuple[int, ...]) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """Minimal primitive period first, then the shortest preperiod.

    A preperiod whose last bit equals the last period bit is absorbed by
    rotating the period one place to the right.
    """
    period = _primitive_period(period)
    while preperiod and preperiod[-1] == period[-1]:
        preperiod = preperiod[:-1]
        period = period[-1:] + period[:-1]
    return preperiod, period


@dataclass(frozen=True)
class MapParams:
    m: int
    r: int

    def __post_init__(self):
        if self.m % 2 == 0 or self.r % 2 == 0:
            raise InvalidParamsError(f"m and r must both be odd, got m={self.m}, r={self.r}")

    def __str__(self):
        return f"T_{{{self.m},{self.r}}}"


@dataclass(frozen=True)
class EventuallyPeriodicBits:
    """2-adic integer with bits preperiod[0], preperiod[1], ... then period repeated forever.

    Bit 0 is the least significant bit. Construction canonicalizes, so two
    instances are equal exactly when they denote the same 2-adic integer.
    """

    preperiod: Tuple[int, ...] = ()
    period: Tuple[int, ...] = (0,)

    def __post_init__(self):
        preperiod = tuple(int(b) for b in self.preperiod)
        period = tuple(int(b) for b in self.period)
        if not period:
            raise PreconditionError("period must contain at least one bit")
        if any(b not in (0, 1) for b in preperiod + period):
            raise PreconditionError("bits must be 0 or 1")
        preperiod, period = canonicalize_bits(preperiod, period)
        object.__setattr__(self, "preperiod", preperiod)
        object.__setattr__(self, "period", period)

    def bit(self, i: int) -> int:
        if i < len(self.preperiod):
            return self.preperiod[i]
        return self.period[(i - len(self.preperiod)) % len(self.period)]

    def one_positions(self) -> Iterator[int]:
        """Positions of one bits in increasing order; infinite unless the period is all zeros."""
        for i, b in enumerate(self.preperiod):
            if b:
                yield i
        if not any(self.period):
            return
        base = len(self.preperiod)
        while True:
            for offset, b in enumerate(self.period):
                if b:
                    yield base + offset
            base += len(self.period)

    def __str__(self):
        pre = "".join(str(b) for b in self.preperiod)
        per = "".join(str(b) for b in self.period)
        return f"{pre}({per})"


@dataclass(frozen=True)
class TwoAdicWord:
    residue: int
    precision: int

    def __post_init__(self):
        if self.precision < 0:
            raise PreconditionError(f"precision must be nonnegative, got {self.precision}")
        if not 0 <= self.residue < (1 << self.precision):
            raise PreconditionError(f"residue {self.residue} out of range for precision {self.precision}")

    @property
    def modulus(self) -> int:
        return 1 << self.precision

    def bit(self, i: int) -> int:
        return (self.residue >> i) & 1

    def bits(self) -> Tuple[int, ...]:
        return tuple(self.bit(i) for i in range(self.precision))


@dataclass(frozen=True)
class OrbitResult:
    """Trajectory of T_{m,r} from x = numerators[0] / denominator.

    Every state shares the starting denominator (T never introduces a new
    odd factor), so states are stored as numerators over it. When a cycle
    is found the revisited state is the last element, so
    states[entry + length] == states[entry].
    """

    params: MapParams
    denominator: int
    numerators: Tuple[int, ...]
    parity_bits: Tuple[int, ...]
    cycle: Optional[Tuple[int, int]] = None
    budget_exhausted: bool = False
    overflowed: bool = False

    @property
    def states(self) -> Tuple[Fraction, ...]:
        return tuple(Fraction(n, self.denominator) for n in self.numerators)

    @property
    def is_cyclic(self) -> bool:
        return self.cycle is not None

    @property
    def entry_index(self) -> Optional[int]:
        return self.cycle[0] if self.cycle else None

    @property
    def cycle_length(self) -> Optional[int]:
        return self.cycle[1] if self.cycle else None

    @property
    def steps(self) -> int:
        return len(self.numerators) - 1


@dataclass(frozen=True)
class NuEstimate:
    value: Fraction
    exact: bool
    window: int


class OmegaHatStatus(str, Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class OmegaHatResult:
    status: OmegaHatStatus
    value: Optional[mpf] = None
    error_bound: Optional[mpf] = None
    exact_value: Optional[Fraction] = None
    terms_used: int = 0
    steps_used: int = 0
    density_seen: Fraction = Fraction(0)
    min_window_density: Optional[Fraction] = None
    witness_index: Optional[int] = None
    certificate: str = "none"
    notes: Tuple[str, ...] = field(default_factory=tuple)
