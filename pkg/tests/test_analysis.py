from fractions import Fraction

import numpy as np
import pytest
from mpmath import mpf

import config
from exceptions import PrecisionError
from models import MapParams
from services.analysis import (
    CONFIRMED,
    REFUTED,
    UNKNOWN,
    IdentitySuite,
    PermutationAnalyzer,
    RationalPairScanner,
    identity_suite,
    qbar_table,
    restriction_coherent,
    scan_omega_hat,
    scan_rational_pairs,
    table1,
    truncated_scientific,
)

GRID = [MapParams(m, r) for m, r in config.DEFAULT_GRID]


def test_qbar_3_1_at_two_bits_is_identity(collatz_3_1):
    table = qbar_table(collatz_3_1, 2)
    assert table.mapping == [0, 1, 2, 3]
    assert table.order == 1
    assert table.bijective


def test_qbar_3_1_at_three_bits(collatz_3_1):
    # 3 -> 5 -> 8 gives parities 1, 1, 0; 5 -> 8 -> 4 gives 1, 0, 0
    table = qbar_table(collatz_3_1, 3)
    assert table.mapping[3] == 3
    assert table.mapping[5] == 1
    assert table.mapping[1] == 5
    assert table.order == 2


def test_qbar_of_shift_map_is_identity():
    table = qbar_table(MapParams(1, -1), 6)
    assert table.mapping == list(range(64))
    assert table.order == 1


@pytest.mark.parametrize("p", GRID, ids=str)
def test_qbar_bijective_and_coherent(p):
    analyzer = PermutationAnalyzer()
    previous = analyzer.qbar_table(p, 1)
    for k in range(2, 11):
        table = analyzer.qbar_table(p, k)
        assert table.bijective
        assert table.order_divides_modulus
        assert restriction_coherent(previous, table)
        previous = table


@pytest.mark.slow
@pytest.mark.parametrize("p", GRID, ids=str)
def test_qbar_bijective_up_to_fourteen_bits(p):
    analyzer = PermutationAnalyzer()
    tables = [analyzer.qbar_table(p, k) for k in range(1, 15)]
    assert all(table.bijective and table.order_divides_modulus for table in tables)
    assert all(restriction_coherent(a, b) for a, b in zip(tables, tables[1:]))


def test_permutation_order_falls_back_to_cycles():
    analyzer = PermutationAnalyzer()
    three_cycle = np.array([1, 2, 0, 3], dtype=np.int64)
    assert analyzer.permutation_order(three_cycle) == 3


def test_qbar_rejects_large_k(collatz_3_1):
    with pytest.raises(PrecisionError):
        PermutationAnalyzer(max_k=8).qbar_table(collatz_3_1, 9)


def test_identity_suite_sampling_is_seeded():
    suite = IdentitySuite()
    assert suite.sample(20, 32, seed=5) == suite.sample(20, 32, seed=5)
    assert suite.sample(20, 32, seed=5) != suite.sample(20, 32, seed=6)


@pytest.mark.parametrize("m, r", [(3, 1), (5, 1), (1, -1), (1, 3), (5, -3)])
def test_identity_suite_finds_no_failures(m, r):
    report = identity_suite(MapParams(m, r), 40, 32, seed=11)
    assert report.counts.refuted == 0
    assert report.counts.confirmed == 40
    assert not report.witnesses
    assert all(tally.failed == 0 for tally in report.checks.values())
    assert report.checks["q_conjugates_t_to_shift"].passed == 40


def test_identity_suite_checks_closed_forms_only_for_m1():
    report = identity_suite(MapParams(1, 5), 30, 16, seed=2)
    assert report.checks["m1_closed_form_omega"].passed + report.checks["m1_closed_form_omega"].skipped == 30
    assert report.checks["m1_closed_form_omega"].passed > 0
    other = identity_suite(MapParams(3, 1), 10, 16, seed=2)
    assert other.checks["m1_closed_form_omega"].skipped == 10


@pytest.mark.slow
@pytest.mark.parametrize("p", GRID, ids=str)
def test_identity_suite_full_grid(p):
    report = IdentitySuite().run(p, 1000, 64, seed=0)
    assert report.counts.refuted == 0


def test_rational_pairs_scan_confirms_cycling_integers(collatz_3_1):
    report = scan_rational_pairs(collatz_3_1, [Fraction(x) for x in range(1, 21)])
    assert report.counts.confirmed == 20
    assert report.counts.total == 20
    # the 1 -> 2 -> 1 cycle has complementary parities 10 and 01
    assert report.items[0].evidence["omega"] == "2/1"
    assert report.items[1].evidence["omega"] == "1/1"


def test_rational_pairs_scan_leaves_long_orbits_unknown(collatz_5_1):
    report = scan_rational_pairs(collatz_5_1, [Fraction(7), Fraction(1)], orbit_budget=200)
    assert [item.verdict for item in report.items] == [UNKNOWN, CONFIRMED]
    assert report.counts.refuted == 0


def test_rational_pairs_scanner_rejects_oversized_bound():
    with pytest.raises(PrecisionError):
        RationalPairScanner(k_probe=16, recon_bound=1000)


def test_omega_hat_scan_is_three_valued(collatz_5_1):
    xs = [Fraction(1), Fraction(13), Fraction(-14, 17)]
    report = scan_omega_hat(collatz_5_1, xs)
    assert [item.verdict for item in report.items] == [CONFIRMED, CONFIRMED, UNKNOWN]
    assert report.statuses["diverged"] == 1
    assert report.counts.refuted == 0
    assert report.summary["threshold"] == pytest.approx(0.43067655807339306)


def test_omega_hat_scan_never_refutes_on_default_inputs(collatz_5_1):
    report = scan_omega_hat(collatz_5_1, [Fraction(x) for x in (-3, -1, 0, 1, 3, 5)])
    assert all(item.verdict != REFUTED for item in report.items)


def test_scans_agree_across_workers(collatz_3_1):
    xs = [Fraction(x) for x in range(1, 9)]
    serial = scan_rational_pairs(collatz_3_1, xs)
    parallel = scan_rational_pairs(collatz_3_1, xs, workers=2)
    assert serial.items == parallel.items


@pytest.mark.parametrize("value, expected", [
    (mpf("-142.63"), "-1.426... x 10^2"),
    (mpf("-11290.7"), "-1.129... x 10^4"),
    (mpf(1234567), "1.234... x 10^6"),
    (0, "0"),
])
def test_truncated_scientific(value, expected):
    assert truncated_scientific(value) == expected


def test_table1_exact_cells():
    rows = {row.x: row for row in table1(xs=[-1, 0, 1, 3, 5])}
    assert rows[1].omega == "-52/31"
    assert rows[1].omega_exact == "-52/31"
    assert rows[0].omega_exact == "-1/3"
    assert rows[-1].omega_exact == "-2/1"
    assert rows[5].omega_hat == "-464/71"
    assert all(row.omega_hat_status == "converged" for row in rows.values())


def test_table1_real_cells():
    rows = {row.x: row for row in table1(xs=[7, 9])}
    assert rows[7].omega_exact is None
    assert rows[7].omega == "2^1 (1 + 2^1 + 2^3 + ...)"
    assert rows[9].omega == "2^2 (1 + 2^1 + 2^5 + ...)"
    assert rows[7].omega_hat == "-1.425... x 10^2"
    assert rows[9].omega_hat == "-1.776... x 10^2"
    assert float(rows[7].omega_hat_value) == pytest.approx(-142.5402630, rel=1e-5)
    assert float(rows[9].omega_hat_value) == pytest.approx(-177.6753288, rel=1e-5)


def test_identity_suite_shift_by_seven_closed_forms():
    report = identity_suite(MapParams(1, 7), 60, 32, seed=7)
    assert report.counts.confirmed == 60
    assert report.checks["m1_closed_form_q"].passed == 60
    assert report.checks["m1_closed_form_omega"].passed == 60


@pytest.mark.slow
def test_identity_suite_shift_by_seven_thousand_samples():
    report = identity_suite(MapParams(1, 7), 1000, 64, seed=0)
    assert report.counts.refuted == 0
    assert report.checks["m1_closed_form_q"].passed == 1000
