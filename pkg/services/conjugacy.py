"""Phi_{m,r} = Q_{m,r}^-1, the autoconjugacy Omega_{m,r} = Phi V Q and its truncations.

Phi sends 2^d0 + 2^d1 + ... to -r (2^d0 / m + 2^d1 / m^2 + ...). Omega_k
replaces Q by its first k parity bits, which makes it an exact rational for
every x; Omega-hat is the limit of Omega_k in the real metric.
"""
import logging
from collections import deque
from fractions import Fraction
from itertools import islice
from math import ceil, exp, inf, log, log2
from typing import Optional

import mpmath
from mpmath import mp, mpf

import config
from exceptions import PreconditionError
from models import EventuallyPeriodicBits, MapParams, OmegaHatResult, OmegaHatStatus, OrbitResult, TwoAdicWord
from services.collatz import iterate_parities, orbit, parity_expansion, q_exact, v_complement
from services.exactnum import RationalLike, as_two_adic

logger = logging.getLogger(__name__)


def phi_exact(p: MapParams, b: EventuallyPeriodicBits) -> Fraction:
    m, r = p.m, p.r
    ones_before = [d for d, bit in enumerate(b.preperiod) if bit]
    total = sum((Fraction(1 << d, m ** (j + 1)) for j, d in enumerate(ones_before)), Fraction(0))

    offset = len(b.preperiod)
    count = len(ones_before)
    period_ones = [e for e, bit in enumerate(b.period) if bit]
    if period_ones:
        # one period's worth of terms, then a geometric series with ratio 2^P / m^p (never 1)
        first = sum(Fraction(1 << (offset + e), m ** (count + i + 1)) for i, e in enumerate(period_ones))
        ratio = Fraction(1 << len(b.period), m ** len(period_ones))
        total += first / (1 - ratio)
    return -r * total


def phi_truncated(p: MapParams, w: TwoAdicWord) -> TwoAdicWord:
    if w.precision < 1:
        raise PreconditionError(f"phi_truncated needs precision >= 1, got {w.precision}")
    modulus = w.modulus
    inverse = pow(p.m, -1, modulus)
    power = inverse
    acc = 0
    for d in range(w.precision):
        if w.bit(d):
            acc = (acc + (power << d)) % modulus
            power = power * inverse % modulus
    return TwoAdicWord(-p.r * acc % modulus, w.precision)


def phi_recursive(p: MapParams, w: TwoAdicWord) -> TwoAdicWord:
    """Phi mod 2^k from Phi(2x) = 2 Phi(x) and Phi(1 + 2x) = -r/m + (2/m) Phi(x)."""
    modulus = w.modulus
    if w.precision == 0:
        return TwoAdicWord(0, 0)
    inverse = pow(p.m, -1, modulus)
    value = 0
    for level in reversed(range(w.precision)):
        if w.bit(level):
            value = (-p.r * inverse + 2 * inverse * value) % modulus
        else:
            value = 2 * value % modulus
    return TwoAdicWord(value, w.precision)


def omega_exact(
    p: MapParams,
    x: RationalLike,
    budget: int = config.ORBIT_BUDGET,
    magnitude_cap_bits: Optional[int] = config.MAGNITUDE_CAP_BITS,
) -> Optional[Fraction]:
    q = q_exact(p, x, budget, magnitude_cap_bits)
    if q is None:
        return None
    return phi_exact(p, v_complement(q))


def omega_from_orbit(p: MapParams, result: OrbitResult) -> Optional[Fraction]:
    q = parity_expansion(result)
    if q is None:
        return None
    return phi_exact(p, v_complement(q))


def omega_truncated(p: MapParams, x: RationalLike, k: int) -> Fraction:
    """Omega_{k,m,r}(x) = Phi(sum of 2^i over even steps i < k, plus all bits from k on)."""
    if k < 1:
        raise PreconditionError(f"k must be at least 1, got {k}")
    m, r = p.m, p.r
    # Horner: acc = sum over even steps i_l of 2^(i_l) * m^(j-1-l)
    acc = 0
    j = 0
    for i, (_, t) in enumerate(islice(iterate_parities(p, x), k)):
        if t == 0:
            acc = acc * m + (1 << i)
            j += 1
    # -(r/m) * (acc / m^(j-1) + 2^k m / (m^j (m-2)))
    return Fraction(-r * (acc * (m - 2) + (1 << k)), m ** j * (m - 2))


def theorem1_scale(p: MapParams, omega_x: RationalLike, n: int) -> Fraction:
    """Omega(2^n x) from Omega(x): r/(m-2) + Omega(2^n x) = (2/m)^n (r/(m-2) + Omega(x))."""
    if n < 0:
        raise PreconditionError(f"n must be nonnegative, got {n}")
    shift = Fraction(p.r, p.m - 2)
    return Fraction(2, p.m) ** n * (shift + Fraction(omega_x)) - shift


def two_adic_prefix(w: TwoAdicWord, terms: int = 3) -> str:
    """Render a word as 2^v (1 + 2^a + 2^b + ...), listing the first one-positions of the unit part."""
    if w.residue == 0:
        return f"0 (mod 2^{w.precision})"
    v = (w.residue & -w.residue).bit_length() - 1
    unit = w.residue >> v
    ones = [i for i in range(unit.bit_length()) if (unit >> i) & 1][:terms]
    parts = ["1"] + [f"2^{a}" for a in ones[1:]]
    return f"2^{v} ({' + '.join(parts)} + ...)"


def _working_precision(tolerance: float, budget: int, guard_bits: int) -> int:
    return guard_bits + budget.bit_length() + max(0, int(-log2(tolerance)) + 1)


class _PartialSum:
    """S_j = sum over l < j of 2^(i_l) / m^l.

    Kept as an exact fraction numerator / m^(j-1) until the denominator
    passes exact_bits_limit bits, then carried on as an mpmath real with an
    accumulated rounding bound.
    """

    def __init__(self, m: int, exact_bits_limit: int, prec: int):
        self.m = m
        self.exact_bits_limit = exact_bits_limit
        self.prec = prec
        self.numerator = 0
        self.scale = 1
        self.terms = 0
        self.real = None
        self.rounding = mpf(0)

    def add(self, i: int, l: int):
        if self.real is None:
            if self.terms:
                self.numerator = self.numerator * self.m + (1 << i)
                self.scale *= self.m
            else:
                self.numerator = 1 << i
            self.terms += 1
            if self.scale.bit_length() > self.exact_bits_limit:
                with mp.workprec(self.prec):
                    self.real = mp.fdiv(self.numerator, self.scale)
                    self.rounding = abs(self.real) * mpmath.ldexp(1, 1 - self.prec)
                logger.debug("partial sum switched to %d-bit reals after %d terms", self.prec, self.terms)
            return

        with mp.workprec(self.prec):
            term = mpmath.ldexp(1, i) / mpf(self.m) ** l
            self.real += term
            self.rounding += (abs(term) + abs(self.real)) * mpmath.ldexp(1, 4 - self.prec)
        self.terms += 1

    def scaled(self, factor: Fraction):
        """factor * S as (mpf value, rounding bound)."""
        with mp.workprec(self.prec):
            if self.real is None:
                exact = factor * Fraction(self.numerator, self.scale)
                value = mp.fdiv(exact.numerator, exact.denominator)
                return value, abs(value) * mpmath.ldexp(1, 1 - self.prec)
            f = mp.fdiv(factor.numerator, factor.denominator)
            value = f * self.real
            return value, abs(f) * self.rounding + abs(value) * mpmath.ldexp(1, 2 - self.prec)


def _first_blowup_step(p: MapParams, x: Fraction, threshold: float, limit: int) -> Optional[int]:
    """First step k at which 2^k / |m|^j exceeds threshold, j being the even steps before k."""
    ln2, ln_m, log_threshold = log(2), log(abs(p.m)), log(threshold)
    evens = 0
    for k, (_, t) in enumerate(islice(iterate_parities(p, x), limit)):
        if k * ln2 - evens * ln_m > log_threshold:
            return k
        if t == 0:
            evens += 1
    return None


def _omega_hat_cyclic(p: MapParams, x: Fraction, trajectory: OrbitResult, tolerance: float, budget: int, threshold: float, guard_bits: int) -> OmegaHatResult:
    entry, length = trajectory.cycle
    period = trajectory.parity_bits[entry:entry + length]
    evens_per_period = period.count(0)
    density = Fraction(evens_per_period, length)
    evens_seen = trajectory.parity_bits[:entry + length].count(0)

    if evens_per_period and (1 << length) < abs(p.m) ** evens_per_period:
        exact = omega_from_orbit(p, trajectory)
        with mp.workprec(_working_precision(tolerance, budget, guard_bits)):
            value = mp.fdiv(exact.numerator, exact.denominator)
        return OmegaHatResult(
            status=OmegaHatStatus.CONVERGED,
            value=value,
            error_bound=mpf(0),
            exact_value=exact,
            terms_used=evens_seen,
            steps_used=trajectory.steps,
            density_seen=density,
            min_window_density=density,
            certificate="exact_cycle",
        )

    # each period adds growth > 0 to log(2^k / |m|^j) and the preperiod costs at most entry * log|m|
    ln_m = log(abs(p.m))
    growth = length * log(2) - evens_per_period * ln_m
    periods = ceil((max(log(threshold), 0.0) + entry * ln_m) / growth) + 2
    witness = _first_blowup_step(p, x, threshold, max(budget, entry + length * periods))
    logger.info("omega-hat of %s under %s diverges: 2^%d / %d^%d per period", x, p, length, abs(p.m), evens_per_period)
    return OmegaHatResult(
        status=OmegaHatStatus.DIVERGED,
        terms_used=evens_seen,
        steps_used=trajectory.steps,
        density_seen=density,
        min_window_density=density,
        witness_index=witness,
        certificate="exact_cycle",
    )


def omega_hat(
    p: MapParams,
    x: RationalLike,
    tolerance: float = config.OMEGA_HAT_TOLERANCE,
    budget: int = config.OMEGA_HAT_BUDGET,
    *,
    cycle_budget: int = config.CYCLE_PROBE_BUDGET,
    divergence_threshold: float = config.DIVERGENCE_THRESHOLD,
    divergence_run: int = config.DIVERGENCE_RUN,
    density_window: int = config.DENSITY_WINDOW,
    min_terms: int = config.MIN_CERTIFIED_TERMS,
    exact_bits_limit: int = config.EXACT_BITS_LIMIT,
    guard_bits: int = config.GUARD_BITS,
) -> OmegaHatResult:
    """Real limit of Omega_k(x) as k grows.

    Cyclic orbits are decided exactly. Otherwise the even steps i_0 < i_1 < ...
    are streamed and S = sum 2^(i_l) / m^l accumulated; convergence is
    certified when |r/m| times the geometric tail majorant |m|^(-eps*j) /
    (1 - |m|^-eps) plus the leftover 2^k / (|m|^j |1 - 2/m|) drops below
    tolerance, where eps = d / (theta + d), theta = log 2 / log|m| and d is
    the smallest observed l / i_l - theta over the density window. That
    certificate assumes the window density persists and is reported as
    conditional. Thresholds use |m|, so negative m is accepted.
    """
    if tolerance <= 0:
        raise PreconditionError(f"tolerance must be positive, got {tolerance}")
    if budget < 1:
        raise PreconditionError(f"budget must be at least 1, got {budget}")
    x = as_two_adic(x)
    prec = _working_precision(tolerance, budget, guard_bits)

    if p.m == 1:
        exact = p.r - x
        with mp.workprec(prec):
            value = mp.fdiv(exact.numerator, exact.denominator)
        return OmegaHatResult(
            status=OmegaHatStatus.CONVERGED,
            value=value,
            error_bound=mpf(0),
            exact_value=exact,
            certificate="closed_form",
        )
    if p.m == -1:
        return OmegaHatResult(status=OmegaHatStatus.UNKNOWN, notes=("no real convergence test for m = -1",))

    trajectory = orbit(p, x, cycle_budget)
    if trajectory.is_cyclic:
        return _omega_hat_cyclic(p, x, trajectory, tolerance, budget, divergence_threshold, guard_bits)

    m, r = p.m, p.r
    ln2, ln_m = log(2), log(abs(m))
    theta = ln2 / ln_m
    log_threshold = log(divergence_threshold)
    factor = Fraction(-r, m)
    complement = abs(1 - 2 / m)

    partial = _PartialSum(m, exact_bits_limit, prec)
    window = deque(maxlen=density_window)
    evens = 0
    run = 0
    steps = 0
    log_blow = 0.0

    for k, (_, t) in enumerate(islice(iterate_parities(p, x), budget)):
        if t == 0:
            partial.add(k, evens)
            if evens:
                window.append((evens / k, evens, k))
            evens += 1
        steps = k + 1
        log_blow = steps * ln2 - evens * ln_m

        run = run + 1 if log_blow > log_threshold else 0
        if run >= divergence_run:
            logger.info("omega-hat of %s under %s declared divergent at step %d", x, p, steps)
            return OmegaHatResult(
                status=OmegaHatStatus.DIVERGED,
                terms_used=evens,
                steps_used=steps,
                density_seen=Fraction(evens, steps),
                min_window_density=_window_minimum(window),
                witness_index=steps,
                certificate="heuristic_growth",
            )

        if evens < min_terms or len(window) < min(density_window, evens - 1) or log_blow > 0:
            continue
        margin = min(window)[0] - theta
        if margin <= 0:
            continue
        eps = margin / (theta + margin)
        decay = exp(-eps * ln_m)
        tail = exp(-eps * ln_m * evens) / (1 - decay)
        leftover = exp(log_blow) / complement
        bound = float(abs(factor)) * (tail + leftover)
        if bound > tolerance:
            continue
        value, rounding = partial.scaled(factor)
        bound += float(rounding)
        if bound <= tolerance:
            return OmegaHatResult(
                status=OmegaHatStatus.CONVERGED,
                value=value,
                error_bound=mpf(bound),
                terms_used=evens,
                steps_used=steps,
                density_seen=Fraction(evens, steps),
                min_window_density=_window_minimum(window),
                certificate="conditional_tail_bound",
                notes=(f"assumes even density stays above {float(theta + margin):.6f} beyond step {steps}",),
            )

    logger.debug("omega-hat of %s under %s undecided after %d steps", x, p, steps)
    value, _ = partial.scaled(factor) if partial.terms else (None, None)
    return OmegaHatResult(
        status=OmegaHatStatus.UNKNOWN,
        value=value,
        error_bound=mpf(inf) if value is not None else None,
        terms_used=evens,
        steps_used=steps,
        density_seen=Fraction(evens, steps) if steps else Fraction(0),
        min_window_density=_window_minimum(window),
    )


def _window_minimum(window) -> Optional[Fraction]:
    if not window:
        return None
    _, l, i = min(window)
    return Fraction(l, i)
