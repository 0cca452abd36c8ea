"""Batch experiments: Q-bar permutation tables, the identity suite, conjecture scanners and the (5, 1) value table."""
import logging
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
import pandas as pd
from mpmath import mp

import config
from exceptions import PrecisionError
from models import MapParams, OmegaHatStatus
from schemas import CheckTally, ParamsRecord, PermutationTable, ScanCounts, ScanItem, ScanReport, Table1Row
from serializers import encode_bits, encode_rational
from services.collatz import orbit, parity_expansion, q_exact, q_truncated, t_apply, v_complement
from services.conjugacy import (
    omega_exact,
    omega_from_orbit,
    omega_hat,
    omega_truncated,
    phi_exact,
    phi_recursive,
    phi_truncated,
    theorem1_scale,
    two_adic_prefix,
)
from services.exactnum import bits_to_rational, max_admissible_bound, rational_reconstruct, rational_to_bits, residue_of, truncate, valuation

logger = logging.getLogger(__name__)

CONFIRMED = "confirmed"
REFUTED = "refuted"
UNKNOWN = "unknown"


def _params_record(p: MapParams) -> ParamsRecord:
    return ParamsRecord(m=p.m, r=p.r)


def _map_items(fn: Callable, items: Sequence, workers: int) -> List:
    # Executor.map yields in input order, so serial and parallel runs agree
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _tally(items: Iterable[ScanItem]) -> ScanCounts:
    counts = ScanCounts()
    for item in items:
        setattr(counts, item.verdict, getattr(counts, item.verdict) + 1)
    return counts


class PermutationAnalyzer:
    """Q-bar_k: Z/2^k -> Z/2^k, x -> first k parity bits of x."""

    def __init__(self, max_k: int = config.QBAR_MAX_K):
        self.max_k = max_k

    def qbar_mapping(self, p: MapParams, k: int) -> np.ndarray:
        if not 1 <= k <= self.max_k:
            raise PrecisionError(f"k must lie in 1..{self.max_k}, got {k}")
        mask = (1 << k) - 1
        x = np.arange(1 << k, dtype=np.int64)
        mapping = np.zeros(1 << k, dtype=np.int64)
        # parities t_i for i < k only depend on x mod 2^k, so states stay reduced
        for i in range(k):
            t = x & 1
            mapping |= t << i
            x = np.where(t == 1, (p.m * x + p.r) >> 1, x >> 1) & mask
        return mapping

    def permutation_order(self, mapping: np.ndarray) -> int:
        size = len(mapping)
        identity = np.arange(size, dtype=mapping.dtype)
        power = mapping.copy()
        for exponent in range(size.bit_length()):
            if np.array_equal(power, identity):
                return 1 << exponent
            power = power[power]
        return self._order_from_cycles(mapping)

    def _order_from_cycles(self, mapping: np.ndarray) -> int:
        visited = np.zeros(len(mapping), dtype=bool)
        order = 1
        for start in range(len(mapping)):
            if visited[start]:
                continue
            length = 0
            node = start
            while not visited[node]:
                visited[node] = True
                node = int(mapping[node])
                length += 1
            order = np.lcm(order, length)
        return int(order)

    def qbar_table(self, p: MapParams, k: int) -> PermutationTable:
        mapping = self.qbar_mapping(p, k)
        modulus = 1 << k
        bijective = bool(np.all(np.bincount(mapping, minlength=modulus) == 1))
        order = self.permutation_order(mapping) if bijective else 0
        if not bijective:
            logger.warning("Q-bar_%d for %s is not a permutation", k, p)
        return PermutationTable(
            params=_params_record(p),
            k=k,
            mapping=mapping.tolist(),
            order=order,
            bijective=bijective,
            order_divides_modulus=bijective and modulus % order == 0,
        )


def restriction_coherent(table_k: PermutationTable, table_next: PermutationTable) -> bool:
    """Low k bits of Q-bar_{k+1} reproduce Q-bar_k."""
    mask = (1 << table_k.k) - 1
    small = np.asarray(table_k.mapping)
    large = np.asarray(table_next.mapping)
    indices = np.arange(len(large)) & mask
    return bool(np.array_equal(large & mask, small[indices]))


def qbar_table(p: MapParams, k: int) -> PermutationTable:
    return PermutationAnalyzer().qbar_table(p, k)


def _integer_step(p: MapParams, w: int) -> int:
    return (p.m * w + p.r) >> 1 if w & 1 else w >> 1


class IdentitySuite:
    """Runs the proved identities of Q, Phi and Omega over seeded random samples.

    Modular checks run on every sample; exact checks need the orbit of x to
    cycle within the budget and are tallied as skipped otherwise.
    """

    def __init__(self, orbit_budget: int = config.IDENTITY_ORBIT_BUDGET, magnitude_cap_bits: int = config.MAGNITUDE_CAP_BITS):
        self.orbit_budget = orbit_budget
        self.magnitude_cap_bits = magnitude_cap_bits
        self.checks = {
            "q_conjugates_t_to_shift": "Q(T x) = sigma Q(x) (mod 2^k)",
            "q_truncation_periodic": "Q_k(x + 2^k) = Q_k(x)",
            "phi_inverts_q_mod": "Phi(Q(x)) = x (mod 2^k)",
            "phi_recursion_matches_series": "recursive Phi = series Phi (mod 2^k)",
            "phi_linear_in_r": "Phi_{m,r} = r Phi_{m,1}",
            "omega_commutes_with_t_mod": "Omega T = T Omega (mod 2^k)",
            "omega_involution_mod": "Omega^2 = 1 (mod 2^k)",
            "q_exact_matches_truncated": "Q(x) mod 2^k = Q_k(x)",
            "phi_inverts_q_exact": "Phi(Q(x)) = x",
            "q_preserves_norm": "|Q(x)|_2 = |x|_2",
            "omega_involution_exact": "Omega(Omega(x)) = x",
            "q_of_omega_is_complement": "Q(Omega(x)) = -1 - Q(x)",
            "omega_scaling": "Omega(2^n x) from Omega(x)",
            "omega_k_converges_2adically": "Omega_k(x) = Omega(x) (mod 2^k)",
            "omega_hat_agrees_with_omega": "Omega-hat(x) = Omega(x) when it converges",
            "m1_closed_form_q": "Q_{1,r}(x) = -x/r",
            "m1_closed_form_omega": "Omega_{1,r}(x) = r - x",
        }

    def sample(self, sample_count: int, k_max: int, seed: int) -> List[Tuple[Fraction, int, int]]:
        rng = np.random.default_rng(seed)
        samples = []
        for _ in range(sample_count):
            if rng.random() < 0.5:
                x = Fraction(int(rng.integers(-1000, 1000, endpoint=True)))
            else:
                x = Fraction(int(rng.integers(-1000, 1000, endpoint=True)), 2 * int(rng.integers(0, 32)) + 1)
            k = int(rng.integers(1, k_max, endpoint=True))
            n = int(rng.integers(1, 8, endpoint=True))
            samples.append((x, k, n))
        return samples

    def run(self, p: MapParams, sample_count: int, k_max: int, seed: int, workers: int = 1) -> ScanReport:
        samples = self.sample(sample_count, k_max, seed)
        outcomes = _map_items(self._check_sample, [(p, x, k, n) for x, k, n in samples], workers)

        tallies = {name: CheckTally() for name in self.checks}
        items = []
        for (x, k, n), results in zip(samples, outcomes):
            failed = []
            for name, passed in results.items():
                tally = tallies[name]
                if passed is None:
                    tally.skipped += 1
                elif passed:
                    tally.passed += 1
                else:
                    tally.failed += 1
                    failed.append(name)
            verdict = REFUTED if failed else CONFIRMED
            items.append(ScanItem(input=encode_rational(x), verdict=verdict, evidence={"k": k, "n": n, "failed": failed}))
            if failed:
                logger.warning("identity failure for %s at x=%s, k=%d: %s", p, x, k, ", ".join(failed))

        return ScanReport(
            kind="identities",
            params=_params_record(p),
            sample=f"{sample_count} seeded samples, seed={seed}, k<= {k_max}, orbit budget {self.orbit_budget}",
            counts=_tally(items),
            items=items,
            witnesses=[item for item in items if item.verdict == REFUTED],
            checks=tallies,
        )

    def _check_sample(self, job) -> Dict[str, Optional[bool]]:
        p, x, k, n = job
        results = {name: None for name in self.checks}
        results.update(self._modular_checks(p, x, k))

        trajectory = orbit(p, x, self.orbit_budget, self.magnitude_cap_bits)
        q = parity_expansion(trajectory)
        if q is not None:
            results.update(self._exact_checks(p, x, k, n, q, trajectory))
        return results

    def _modular_checks(self, p: MapParams, x: Fraction, k: int) -> Dict[str, bool]:
        modulus = 1 << k
        qk = q_truncated(p, x, k)
        q_next = q_truncated(p, x, k + 1)
        x_mod = residue_of(x, k)

        omega_next = residue_of(omega_truncated(p, x, k + 1), k + 1).residue
        omega_k = residue_of(omega_truncated(p, x, k), k)
        image_of_tx = residue_of(omega_truncated(p, t_apply(p, x), k), k).residue

        bits = rational_to_bits(x)
        return {
            "q_conjugates_t_to_shift": q_truncated(p, t_apply(p, x), k).residue == q_next.residue >> 1,
            "q_truncation_periodic": q_truncated(p, x + modulus, k) == qk,
            "phi_inverts_q_mod": phi_truncated(p, qk) == x_mod,
            "phi_recursion_matches_series": phi_recursive(p, qk) == phi_truncated(p, qk),
            "phi_linear_in_r": phi_exact(p, bits) == p.r * phi_exact(MapParams(p.m, 1), bits),
            "omega_commutes_with_t_mod": _integer_step(p, omega_next) % modulus == image_of_tx,
            "omega_involution_mod": residue_of(omega_truncated(p, omega_k.residue, k), k) == x_mod,
        }

    def _exact_checks(self, p: MapParams, x: Fraction, k: int, n: int, q, trajectory) -> Dict[str, Optional[bool]]:
        results = {
            "q_exact_matches_truncated": truncate(q, k) == q_truncated(p, x, k),
            "phi_inverts_q_exact": phi_exact(p, q) == x,
            "q_preserves_norm": valuation(bits_to_rational(q)) == valuation(x),
        }
        omega = omega_from_orbit(p, trajectory)
        results["omega_k_converges_2adically"] = residue_of(omega_truncated(p, x, k), k) == residue_of(omega, k)

        omega_orbit = orbit(p, omega, self.orbit_budget, self.magnitude_cap_bits)
        if omega_orbit.is_cyclic:
            results["omega_involution_exact"] = omega_from_orbit(p, omega_orbit) == x
            results["q_of_omega_is_complement"] = parity_expansion(omega_orbit) == v_complement(q)

        scaled = omega_exact(p, x * 2 ** n, self.orbit_budget, self.magnitude_cap_bits)
        if scaled is not None:
            results["omega_scaling"] = scaled == theorem1_scale(p, omega, n)

        if abs(p.m) > 1:
            hat = omega_hat(p, x, cycle_budget=self.orbit_budget)
            if hat.status == OmegaHatStatus.CONVERGED and hat.exact_value is not None:
                results["omega_hat_agrees_with_omega"] = hat.exact_value == omega

        if p.m == 1:
            results["m1_closed_form_q"] = bits_to_rational(q) == -x / p.r
            results["m1_closed_form_omega"] = omega == p.r - x
        return results


def identity_suite(p: MapParams, sample_count: int, k_max: int, seed: int, workers: int = 1) -> ScanReport:
    return IdentitySuite().run(p, sample_count, k_max, seed, workers)


class RationalPairScanner:
    """Looks for x whose orbit does not visibly cycle while Omega(x) looks rational.

    Such x is the shape a counterexample to the rational-pairs conjecture
    must take; candidates are reported for deeper budgets, never as refutations.
    """

    def __init__(self, orbit_budget: int = config.ORBIT_BUDGET, k_probe: int = config.SCAN_PAIRS_K_PROBE,
                 recon_bound: Optional[int] = None, magnitude_cap_bits: int = config.MAGNITUDE_CAP_BITS):
        self.orbit_budget = orbit_budget
        self.k_low = k_probe // 2
        self.k_high = k_probe
        self.recon_bound = recon_bound if recon_bound is not None else max_admissible_bound(self.k_low)
        self.magnitude_cap_bits = magnitude_cap_bits
        if self.k_low < 2 or 2 * self.recon_bound ** 2 >= 1 << self.k_low:
            raise PrecisionError(
                f"bound {self.recon_bound} needs k_probe/2 = {self.k_low} with 2*bound^2 < 2^{self.k_low}"
            )

    def scan(self, p: MapParams, xs: Sequence[Fraction], workers: int = 1) -> ScanReport:
        items = _map_items(self._scan_one, [(p, x) for x in xs], workers)
        return ScanReport(
            kind="scan-pairs",
            params=_params_record(p),
            sample=f"{len(xs)} inputs, orbit budget {self.orbit_budget}, k in ({self.k_low}, {self.k_high}), bound {self.recon_bound}",
            counts=_tally(items),
            items=items,
            witnesses=[item for item in items if item.evidence.get("candidate_omega") is not None],
        )

    def _scan_one(self, job) -> ScanItem:
        p, x = job
        trajectory = orbit(p, x, self.orbit_budget, self.magnitude_cap_bits)
        if trajectory.is_cyclic:
            q = parity_expansion(trajectory)
            return ScanItem(
                input=encode_rational(x),
                verdict=CONFIRMED,
                evidence={
                    "omega": encode_rational(omega_from_orbit(p, trajectory)),
                    "q": encode_rational(bits_to_rational(q)),
                    "q_bits": encode_bits(q),
                    "cycle_length": trajectory.cycle_length,
                },
            )

        low = rational_reconstruct(residue_of(omega_truncated(p, x, self.k_low), self.k_low), self.recon_bound)
        high = rational_reconstruct(residue_of(omega_truncated(p, x, self.k_high), self.k_high), self.recon_bound)
        candidate = low if low is not None and low == high else None
        if candidate is not None:
            logger.info("candidate rational pair under %s: x=%s, Omega(x)=%s with no cycle in %d steps",
                        p, x, candidate, trajectory.steps)
        return ScanItem(
            input=encode_rational(x),
            verdict=UNKNOWN,
            evidence={
                "steps": trajectory.steps,
                "overflowed": trajectory.overflowed,
                "candidate_omega": encode_rational(candidate) if candidate is not None else None,
            },
        )


def scan_rational_pairs(p: MapParams, xs: Sequence[Fraction], orbit_budget: int = config.ORBIT_BUDGET,
                        k_probe: int = config.SCAN_PAIRS_K_PROBE, recon_bound: Optional[int] = None,
                        workers: int = 1) -> ScanReport:
    return RationalPairScanner(orbit_budget, k_probe, recon_bound).scan(p, xs, workers)


class OmegaHatScanner:
    """Existence of Omega-hat over a set of inputs.

    converged -> confirmed; diverged with an exact cycle certificate on an
    integer input with m >= 5 contradicts the integer-existence conjecture
    and is refuted; everything else is unknown.
    """

    def __init__(self, tolerance: float = config.OMEGA_HAT_TOLERANCE, budget: int = config.OMEGA_HAT_BUDGET):
        self.tolerance = tolerance
        self.budget = budget

    def scan(self, p: MapParams, xs: Sequence[Fraction], workers: int = 1) -> ScanReport:
        items = _map_items(self._scan_one, [(p, x) for x in xs], workers)

        statuses = {status.value: 0 for status in OmegaHatStatus}
        for item in items:
            statuses[item.evidence["status"]] += 1

        densities = pd.Series([float(Fraction(item.evidence["density_seen"])) for item in items], dtype=float)
        window_minima = [Fraction(item.evidence["min_window_density"]) for item in items
                         if item.evidence["min_window_density"] is not None]
        summary = {
            "density_seen": {key: float(value) for key, value in densities.describe().items()} if len(items) else {},
            "min_window_density": encode_rational(min(window_minima)) if window_minima else None,
            "threshold": float(mpmath.log(2) / mpmath.log(abs(p.m))) if abs(p.m) > 1 else None,
        }
        return ScanReport(
            kind="scan-hat",
            params=_params_record(p),
            sample=f"{len(xs)} inputs, tolerance {self.tolerance}, budget {self.budget}",
            counts=_tally(items),
            items=items,
            witnesses=[item for item in items if item.verdict == REFUTED],
            statuses=statuses,
            summary=summary,
        )

    def _scan_one(self, job) -> ScanItem:
        p, x = job
        result = omega_hat(p, x, self.tolerance, self.budget)
        if result.status == OmegaHatStatus.CONVERGED:
            verdict = CONFIRMED
        elif result.status == OmegaHatStatus.DIVERGED and result.certificate == "exact_cycle" \
                and x.denominator == 1 and p.m >= 5:
            verdict = REFUTED
        else:
            verdict = UNKNOWN
        return ScanItem(
            input=encode_rational(x),
            verdict=verdict,
            evidence={
                "status": result.status.value,
                "value": mpmath.nstr(result.value, 12) if result.value is not None else None,
                "exact_value": encode_rational(result.exact_value) if result.exact_value is not None else None,
                "error_bound": mpmath.nstr(result.error_bound, 6) if result.error_bound is not None else None,
                "density_seen": encode_rational(result.density_seen),
                "min_window_density": encode_rational(result.min_window_density) if result.min_window_density is not None else None,
                "witness_index": result.witness_index,
                "certificate": result.certificate,
            },
        )


def scan_omega_hat(p: MapParams, xs: Sequence[Fraction], tolerance: float = config.OMEGA_HAT_TOLERANCE,
                   budget: int = config.OMEGA_HAT_BUDGET, workers: int = 1) -> ScanReport:
    return OmegaHatScanner(tolerance, budget).scan(p, xs, workers)


def truncated_scientific(value, digits: int = 4) -> str:
    """-142.63... -> '-1.426... x 10^2', digits truncated rather than rounded."""
    if value == 0:
        return "0"
    with mp.workprec(max(mp.prec, 128)):
        magnitude = abs(value)
        exponent = int(mpmath.floor(mpmath.log10(magnitude)))
        mantissa = magnitude / mpmath.mpf(10) ** exponent
        if mantissa >= 10:
            mantissa /= 10
            exponent += 1
        scaled = int(mpmath.floor(mantissa * 10 ** (digits - 1)))
    whole, frac = divmod(scaled, 10 ** (digits - 1))
    sign = "-" if value < 0 else ""
    return f"{sign}{whole}.{frac:0{digits - 1}d}... x 10^{exponent}"


def table1(tolerance: float = config.OMEGA_HAT_TOLERANCE, xs: Sequence[int] = config.TABLE1_XS,
           budget: int = config.CYCLE_PROBE_BUDGET) -> List[Table1Row]:
    p = MapParams(*config.TABLE1_PARAMS)
    rows = []
    for x in xs:
        exact = omega_exact(p, x, budget)
        if exact is not None:
            omega_cell = str(exact)
        else:
            prefix = residue_of(omega_truncated(p, x, config.TABLE1_PREFIX_BITS), config.TABLE1_PREFIX_BITS)
            omega_cell = two_adic_prefix(prefix)

        hat = omega_hat(p, x, tolerance)
        if hat.status == OmegaHatStatus.CONVERGED and hat.exact_value is not None:
            hat_cell = str(hat.exact_value)
        elif hat.status == OmegaHatStatus.CONVERGED:
            hat_cell = truncated_scientific(hat.value)
        else:
            hat_cell = hat.status.value

        rows.append(Table1Row(
            x=x,
            omega=omega_cell,
            omega_exact=encode_rational(exact) if exact is not None else None,
            omega_hat=hat_cell,
            omega_hat_status=hat.status.value,
            omega_hat_value=mpmath.nstr(hat.value, 12) if hat.value is not None else None,
            omega_hat_error_bound=mpmath.nstr(hat.error_bound, 6) if hat.error_bound is not None else None,
        ))
    return rows
