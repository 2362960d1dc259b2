import math
from fractions import Fraction

import pytest

from camg.exact import (
    ExactTimeTable,
    SeriesCoefficients,
    exact_expected_time,
    functional_equation_rhs,
    geometric,
    linear_fit,
    recursion_residual,
    series_compose,
    series_mul,
    verify_functional_equation,
)
from oracles import stage_two_expected_days


def test_small_values_are_exact():
    assert [exact_expected_time(n) for n in range(5)] == [0, 0, 2, Fraction(10, 3), Fraction(100, 21)]
    assert all(isinstance(exact_expected_time(n), Fraction) for n in range(5))


def test_negative_size_rejected():
    with pytest.raises(ValueError):
        exact_expected_time(-1)
    with pytest.raises(ValueError):
        ExactTimeTable.build(-2)


@pytest.mark.parametrize("n", range(2, 9))
def test_matches_markov_chain_on_stacks(n):
    assert exact_expected_time(n) == stage_two_expected_days(n)


def test_eighth_value_against_chain():
    assert exact_expected_time(8) == Fraction(1452728, 137795)


def test_unsimplified_recursion_holds_exactly():
    table = ExactTimeTable.build(40)
    assert all(recursion_residual(table, n) == 0 for n in range(2, 41))


def test_sequence_is_increasing():
    table = ExactTimeTable.build(60)
    assert all(table[n + 1] > table[n] for n in range(1, 60))


def test_ratio_band_holds_only_from_24():
    table = ExactTimeTable.build(200)
    in_band = [1.40 <= float(table[n]) / n <= 1.48 for n in range(10, 201)]
    first = 10 + in_band.index(True)
    assert first == 24
    assert all(in_band[first - 10 :])
    assert float(table[10]) / 10 < 1.40


def test_table_csv():
    text = ExactTimeTable.build(4).to_csv()
    lines = text.splitlines()
    assert lines[0] == "n,T_n_numerator,T_n_denominator,T_n_float"
    assert lines[4].startswith("3,10,3,3.333")
    assert lines[5].startswith("4,100,21,")


def test_fit_over_one_to_thirty():
    slope, intercept = linear_fit(ExactTimeTable.build(30), 1, 30)
    assert slope == pytest.approx(1.4449, abs=0.005)
    assert intercept == pytest.approx(-1.0451, abs=0.02)


def test_fit_sensitivity_to_lower_end():
    slope, intercept = linear_fit(ExactTimeTable.build(30), 2, 30)
    assert slope == pytest.approx(1.44193, abs=1e-4)
    assert intercept == pytest.approx(-0.98402, abs=1e-4)


def test_fit_refuses_degenerate_ranges():
    table = ExactTimeTable.build(5)
    with pytest.raises(ValueError):
        linear_fit(table, 3, 3)
    with pytest.raises(ValueError):
        linear_fit(table, 1, 9)


def test_tail_slope_matches_inverse_log_two():
    slope, _ = linear_fit(ExactTimeTable.build(200), 150, 200)
    assert abs(slope - 1 / math.log(2)) < 1e-4


def test_large_n_offset_is_minus_one():
    table = ExactTimeTable.build(200)
    offsets = [float(table[n]) - n / math.log(2) for n in range(150, 201)]
    assert all(abs(o + 1) < 1e-3 for o in offsets)


# --- series -------------------------------------------------------------------


def test_series_helpers():
    one_minus_x_inv = geometric(Fraction(1), 5)
    assert one_minus_x_inv == [1] * 6
    square = series_mul(one_minus_x_inv, one_minus_x_inv, 5)
    assert square == [1, 2, 3, 4, 5, 6]
    # 1/(1-y) with y = x/(1-x) is (1-x)/(1-2x) = 1 + x + 2x^2 + 4x^3 ...
    inner = [Fraction(0)] + [Fraction(1)] * 5
    assert series_compose([Fraction(1)] * 6, inner, 5) == [1, 1, 2, 4, 8, 16]
    with pytest.raises(ValueError):
        series_compose([1, 1], [1, 1], 1)


def test_functional_equation_through_order_twelve():
    coeffs = SeriesCoefficients.from_table(ExactTimeTable.build(12))
    assert verify_functional_equation(coeffs, 12)


def test_misprinted_leading_term_fails_from_order_three():
    coeffs = SeriesCoefficients.from_table(ExactTimeTable.build(12))
    assert verify_functional_equation(coeffs, 2, printed_form=True)
    assert not verify_functional_equation(coeffs, 3, printed_form=True)
    rhs = functional_equation_rhs(coeffs, 4, printed_form=True)
    assert coeffs.coeffs[3] - rhs[3] == Fraction(1, 2)
    assert coeffs.coeffs[4] - rhs[4] == Fraction(3, 4)


def test_functional_equation_needs_enough_coefficients():
    coeffs = SeriesCoefficients.from_table(ExactTimeTable.build(4))
    with pytest.raises(ValueError):
        verify_functional_equation(coeffs, 6)
