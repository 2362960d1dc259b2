"""Exact expected stage-two durations and their generating function.

``T[n]`` is the expected number of days needed to hand out unique IDs to a
set of ``n`` agents by recursive coin splitting. With ``P(r) = C(n, r) / 2^n``::

    T[0] = T[1] = 0
    T[n] = 1 + sum_r P(r) (T[r] + T[n - r])  =  1 + 2 sum_r P(r) T[r]   (n >= 2)

The ``r = n`` term contains ``T[n]`` itself; moving it to the left gives
``T[n] (1 - 2^(1-n)) = 1 + 2 sum_{r<n} P(r) T[r]``. Everything here is exact
``Fraction`` arithmetic; floats appear only in :func:`linear_fit`.
"""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Sequence

_TABLE: list[Fraction] = [Fraction(0), Fraction(0)]


def _extend(n_max: int) -> None:
    for n in range(len(_TABLE), n_max + 1):
        weighted = sum(comb(n, r) * _TABLE[r] for r in range(2, n))
        two_n = 1 << n
        # T_n (2^n - 2) = 2^n + 2 * sum_{r<n} C(n, r) T_r
        _TABLE.append((two_n + 2 * weighted) / Fraction(two_n - 2))


def exact_expected_time(n: int) -> Fraction:
    if n < 0:
        raise ValueError("set size must be non-negative")
    _extend(n)
    return _TABLE[n]


@dataclass(frozen=True)
class ExactTimeTable:
    values: tuple[Fraction, ...]

    @classmethod
    def build(cls, n_max: int) -> "ExactTimeTable":
        if n_max < 0:
            raise ValueError("n_max must be non-negative")
        _extend(n_max)
        return cls(tuple(_TABLE[: n_max + 1]))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, n: int) -> Fraction:
        return self.values[n]

    @property
    def n_max(self) -> int:
        return len(self.values) - 1

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["n", "T_n_numerator", "T_n_denominator", "T_n_float"])
        for n, t in enumerate(self.values):
            writer.writerow([n, t.numerator, t.denominator, repr(float(t))])
        return buf.getvalue()


def recursion_residual(table: ExactTimeTable, n: int) -> Fraction:
    """``T[n]`` minus the right-hand side of the unsimplified recursion (n >= 2)."""
    T = table.values
    rhs = 1 + sum(Fraction(comb(n, r), 1 << n) * (T[r] + T[n - r]) for r in range(n + 1))
    return T[n] - rhs


# --- formal power series -----------------------------------------------------


@dataclass(frozen=True)
class SeriesCoefficients:
    """Coefficients of ``T(x) = sum_r T_r x^r``."""

    coeffs: tuple[Fraction, ...]

    @classmethod
    def from_table(cls, table: ExactTimeTable) -> "SeriesCoefficients":
        return cls(table.values)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1


def series_mul(a: Sequence[Fraction], b: Sequence[Fraction], order: int) -> list[Fraction]:
    out = [Fraction(0)] * (order + 1)
    for i, ai in enumerate(a[: order + 1]):
        if ai == 0:
            continue
        for k, bk in enumerate(b[: order + 1 - i]):
            out[i + k] += ai * bk
    return out


def series_compose(outer: Sequence[Fraction], inner: Sequence[Fraction], order: int) -> list[Fraction]:
    """``outer(inner(x))`` truncated at ``order``; ``inner`` must vanish at 0."""
    if inner and inner[0] != 0:
        raise ValueError("inner series must have zero constant term")
    out = [Fraction(0)] * (order + 1)
    power = [Fraction(1)] + [Fraction(0)] * order
    for r, c in enumerate(outer[: order + 1]):
        if r > 0:
            power = series_mul(power, inner, order)
        if c:
            for k in range(order + 1):
                out[k] += c * power[k]
    return out


def geometric(ratio: Fraction, order: int, scale: Fraction = Fraction(1), shift: int = 0) -> list[Fraction]:
    """``scale * x^shift / (1 - ratio * x)`` truncated at ``order``."""
    out = [Fraction(0)] * (order + 1)
    for k in range(shift, order + 1):
        out[k] = scale * ratio ** (k - shift)
    return out


def functional_equation_rhs(coeffs: SeriesCoefficients, order: int, printed_form: bool = False) -> list[Fraction]:
    """Right-hand side ``x^2/(1-x) + 4/(2-x) T(x/(2-x))`` as a truncated series.

    Summing the recursion over ``n >= 2`` gives the inhomogeneous term
    ``x^2 / (1 - x)``. ``printed_form=True`` swaps in ``x^2 / (1 - x/2)``
    instead, which disagrees with the recursion from ``x^3`` on.
    """
    half = Fraction(1, 2)
    lead = geometric(half if printed_form else Fraction(1), order, shift=2)
    inner = geometric(half, order, scale=half, shift=1)  # x/(2-x)
    composed = series_compose(coeffs.coeffs, inner, order)
    prefactor = geometric(half, order, scale=Fraction(2))  # 4/(2-x)
    tail = series_mul(prefactor, composed, order)
    return [l + t for l, t in zip(lead, tail)]


def verify_functional_equation(coeffs: SeriesCoefficients, order: int, printed_form: bool = False) -> bool:
    if order > coeffs.order:
        raise ValueError(f"need coefficients through order {order}, have {coeffs.order}")
    rhs = functional_equation_rhs(coeffs, order, printed_form)
    return list(coeffs.coeffs[: order + 1]) == rhs


# --- fit ---------------------------------------------------------------------


def linear_fit(table: ExactTimeTable, n_min: int, n_max: int) -> tuple[float, float]:
    """Least-squares slope and intercept of ``T_n`` against ``n`` over ``n_min..n_max``."""
    if n_max - n_min + 1 < 2:
        raise ValueError("a linear fit needs at least two points")
    if n_min < 0 or n_max > table.n_max:
        raise ValueError(f"fit range {n_min}..{n_max} outside table 0..{table.n_max}")
    xs = list(range(n_min, n_max + 1))
    ys = [float(table[n]) for n in xs]
    fit = statistics.linear_regression(xs, ys)
    return fit.slope, fit.intercept
