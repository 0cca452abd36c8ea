from fractions import Fraction

import numpy as np
import pytest

from exceptions import PreconditionError
from models import MapParams, OmegaHatStatus, TwoAdicWord
from services.collatz import q_exact, q_truncated, v_complement
from services.conjugacy import (
    omega_exact,
    omega_hat,
    omega_truncated,
    phi_exact,
    phi_recursive,
    phi_truncated,
    theorem1_scale,
    two_adic_prefix,
)
from services.exactnum import (
    bits_to_rational,
    max_admissible_bound,
    rational_reconstruct,
    rational_to_bits,
    residue_of,
)

SMALL_INTEGER_OMEGA = {
    -7: Fraction(-160532, 78125),
    -5: Fraction(-3662262, 1953125),
    -3: Fraction(-321064, 78125),
    -1: Fraction(-2),
    0: Fraction(-1, 3),
    1: Fraction(-52, 31),
    3: Fraction(-26, 31),
    5: Fraction(-464, 71),
}


def test_phi_exact_of_periodic_bits(collatz_5_1):
    assert phi_exact(collatz_5_1, rational_to_bits(Fraction(-6, 7))) == Fraction(-14, 17)


def test_phi_inverts_q_exactly(collatz_3_1):
    for x in (Fraction(1), Fraction(-17), Fraction(5, 7), Fraction(0)):
        assert phi_exact(collatz_3_1, q_exact(collatz_3_1, x)) == x


def test_phi_exact_of_minus_one_and_minus_a_third(collatz_3_1, collatz_5_1):
    assert phi_exact(collatz_5_1, rational_to_bits(-1)) == Fraction(-1, 3)
    assert phi_exact(collatz_3_1, rational_to_bits(Fraction(-1, 3))) == 1
    assert phi_truncated(collatz_3_1, TwoAdicWord(21, 6)) == TwoAdicWord(1, 6)


def test_phi_truncated_small_word(collatz_5_1):
    assert phi_truncated(collatz_5_1, TwoAdicWord(1, 4)) == TwoAdicWord(3, 4)
    assert phi_recursive(collatz_5_1, TwoAdicWord(1, 4)) == TwoAdicWord(3, 4)


def test_phi_truncated_needs_a_bit(collatz_5_1):
    with pytest.raises(PreconditionError):
        phi_truncated(collatz_5_1, TwoAdicWord(0, 0))


def test_phi_truncated_inverts_q_truncated_on_random_pairs():
    rng = np.random.default_rng(4)
    for m, r in ((3, 1), (5, 1), (7, -3)):
        p = MapParams(m, r)
        for _ in range(300):
            x = Fraction(int(rng.integers(-10**6, 10**6)), 2 * int(rng.integers(0, 500)) + 1)
            k = int(rng.integers(1, 64, endpoint=True))
            assert phi_truncated(p, q_truncated(p, x, k)) == residue_of(x, k)


def test_phi_is_linear_in_r():
    bits = rational_to_bits(Fraction(11, 13))
    for r in (-5, -1, 3, 7):
        assert phi_exact(MapParams(5, r), bits) == r * phi_exact(MapParams(5, 1), bits)


@pytest.mark.parametrize("x, expected", sorted(SMALL_INTEGER_OMEGA.items()))
def test_omega_exact_small_integers(collatz_5_1, x, expected):
    assert omega_exact(collatz_5_1, x) == expected


def test_omega_is_an_involution(collatz_5_1):
    for x in (1, 3, -7, Fraction(-14, 17)):
        assert omega_exact(collatz_5_1, omega_exact(collatz_5_1, x)) == x


def test_q_of_omega_is_complement(collatz_5_1):
    x = Fraction(-14, 17)
    assert q_exact(collatz_5_1, omega_exact(collatz_5_1, x)) == v_complement(q_exact(collatz_5_1, x))


def test_omega_exact_none_without_cycle(collatz_5_1):
    assert omega_exact(collatz_5_1, 7, budget=100) is None


@pytest.mark.parametrize("k", [1, 2, 10, 64])
def test_omega_truncated_at_zero(collatz_5_1, k):
    assert omega_truncated(collatz_5_1, 0, k) == Fraction(-1, 3)


def test_omega_truncated_converges_two_adically(collatz_5_1):
    for x, expected in SMALL_INTEGER_OMEGA.items():
        for k in (5, 17, 40):
            assert residue_of(omega_truncated(collatz_5_1, x, k), k) == residue_of(expected, k)


def test_omega_truncated_requires_positive_k(collatz_5_1):
    with pytest.raises(PreconditionError):
        omega_truncated(collatz_5_1, 1, 0)


def test_reconstruction_recovers_omega_from_truncation(collatz_5_1):
    bound = max_admissible_bound(128)
    for x, expected in SMALL_INTEGER_OMEGA.items():
        word = residue_of(omega_truncated(collatz_5_1, x, 128), 128)
        assert rational_reconstruct(word, bound) == expected


def test_scaling_by_powers_of_two(collatz_5_1):
    assert theorem1_scale(collatz_5_1, Fraction(-52, 31), 1) == Fraction(-27, 31)
    assert omega_exact(collatz_5_1, 2) == Fraction(-27, 31)
    for n in range(1, 9):
        for x in (1, -3, 5):
            assert omega_exact(collatz_5_1, x * 2 ** n) == theorem1_scale(collatz_5_1, omega_exact(collatz_5_1, x), n)


def test_scaling_rejects_negative_n(collatz_3_1):
    with pytest.raises(PreconditionError):
        theorem1_scale(collatz_3_1, 0, -1)


@pytest.mark.parametrize("r", [-7, -5, -3, -1, 1, 3, 5, 7])
def test_m1_closed_forms(r):
    p = MapParams(1, r)
    for x in range(-1000, 1001, 37):
        assert bits_to_rational(q_exact(p, x)) == Fraction(-x, r)
        assert omega_exact(p, x) == r - x


def test_two_adic_prefix():
    assert two_adic_prefix(TwoAdicWord(12, 4)) == "2^2 (1 + 2^1 + ...)"
    assert two_adic_prefix(TwoAdicWord(0, 8)) == "0 (mod 2^8)"
    assert two_adic_prefix(TwoAdicWord(0b1101, 4)) == "2^0 (1 + 2^2 + 2^3 + ...)"


def test_omega_hat_cyclic_converges_exactly(collatz_5_1):
    result = omega_hat(collatz_5_1, 1)
    assert result.status == OmegaHatStatus.CONVERGED
    assert result.exact_value == Fraction(-52, 31)
    assert result.certificate == "exact_cycle"
    assert abs(float(result.value) + 52 / 31) < 1e-12


def test_omega_hat_counterexample_diverges(collatz_5_1):
    result = omega_hat(collatz_5_1, Fraction(-14, 17))
    assert result.status == OmegaHatStatus.DIVERGED
    assert result.certificate == "exact_cycle"
    assert result.density_seen == Fraction(1, 3)
    assert result.witness_index is not None


@pytest.mark.parametrize("x, expected", [(7, -142.5402630), (9, -177.6753288), (-9, -1.129e4)])
def test_omega_hat_real_values(collatz_5_1, x, expected):
    result = omega_hat(collatz_5_1, x)
    assert result.status == OmegaHatStatus.CONVERGED
    assert result.certificate == "conditional_tail_bound"
    assert float(result.error_bound) <= 1e-6
    assert float(result.value) == pytest.approx(expected, rel=5e-3)


def test_omega_hat_m1_closed_form():
    result = omega_hat(MapParams(1, 3), Fraction(5, 7))
    assert result.status == OmegaHatStatus.CONVERGED
    assert result.exact_value == Fraction(16, 7)
    assert result.certificate == "closed_form"


def test_omega_hat_m_minus_one_is_unknown():
    assert omega_hat(MapParams(-1, 1), 3).status == OmegaHatStatus.UNKNOWN


def test_omega_hat_rejects_bad_tolerance(collatz_5_1):
    with pytest.raises(PreconditionError):
        omega_hat(collatz_5_1, 1, tolerance=0)


def test_omega_hat_diverged_witness_beyond_budget(collatz_5_1):
    result = omega_hat(collatz_5_1, Fraction(-14, 17), budget=5)
    assert result.status == OmegaHatStatus.DIVERGED
    assert result.witness_index is not None
    assert result.witness_index > 5


@pytest.mark.slow
def test_phi_truncated_inverts_q_truncated_ten_thousand_pairs():
    rng = np.random.default_rng(10)
    for m, r in ((3, 1), (5, 1)):
        p = MapParams(m, r)
        for _ in range(5000):
            x = Fraction(int(rng.integers(-10**6, 10**6)), 2 * int(rng.integers(0, 500)) + 1)
            k = int(rng.integers(1, 64, endpoint=True))
            assert phi_truncated(p, q_truncated(p, x, k)) == residue_of(x, k)


@pytest.mark.slow
@pytest.mark.parametrize("m, r", [(3, 1), (5, 1)])
def test_scaling_on_cyclic_samples(m, r):
    p = MapParams(m, r)
    xs = [Fraction(a, b) for a in range(-40, 41) for b in (1, 3, 5, 7)]
    checked = 0
    for x in xs:
        base = omega_exact(p, x, budget=2000)
        if base is None:
            continue
        for n in range(1, 9):
            scaled = omega_exact(p, x * 2 ** n, budget=2000)
            if scaled is not None:
                assert scaled == theorem1_scale(p, base, n)
                checked += 1
    assert checked > 0
