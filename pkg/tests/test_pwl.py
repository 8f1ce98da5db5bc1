import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microgrid_ems.milp import MilpModel, solve_lp
from microgrid_ems.pwl import (PwlCurve, PwlError, add_epigraph, approximate_quadratic,
                               emit_epigraph_rows, evaluate)

FUEL_A = 1.72e-6


def test_fuel_curve_breakpoints_and_error():
    c = approximate_quadratic(FUEL_A, 0.0, 0, 600, 2)
    assert c.xs == pytest.approx((0, 300, 600))
    assert c.ys == pytest.approx((0, 0.1548, 0.6192))
    assert c.max_abs_error == pytest.approx(0.0387)
    assert c.segment_count == 2


def test_linear_function_is_exact():
    c = approximate_quadratic(0.0, 0.37, -2, 5, 1)
    assert c.max_abs_error == 0
    assert evaluate(c, 1.0) == pytest.approx(0.37)


def test_unit_parabola():
    c = approximate_quadratic(1.0, 0.0, 0, 2, 2)
    assert c.breakpoints == [(0, 0), (1, 1), (2, 4)]
    assert c.max_abs_error == 0.25
    assert evaluate(c, 1.5) == pytest.approx(2.5)


def test_evaluate_between_and_at_breakpoints():
    c = approximate_quadratic(FUEL_A, 0.0, 0, 600, 2)
    assert evaluate(c, 150) == pytest.approx(0.0774)
    for x, y in c.breakpoints:
        assert evaluate(c, x) == y


def test_errors():
    with pytest.raises(PwlError):
        approximate_quadratic(1, 0, 3, 1, 2)
    with pytest.raises(PwlError):
        approximate_quadratic(-1, 0, 0, 1, 2)
    with pytest.raises(PwlError):
        approximate_quadratic(1, 0, 0, 1, 0)
    with pytest.raises(PwlError):
        evaluate(approximate_quadratic(1, 0, 0, 1, 2), 1.5)
    concave = PwlCurve((0.0, 1.0, 2.0), (0.0, 2.0, 3.0), 0.0)
    with pytest.raises(PwlError):
        emit_epigraph_rows(concave, 0, 1)


def test_degenerate_domain():
    c = approximate_quadratic(2.0, 1.0, 3, 3, 4)
    assert evaluate(c, 3) == pytest.approx(21.0)
    assert c.max_abs_error == 0


def _min_z(curve, x0):
    m = MilpModel()
    x = m.add_var("x", x0, x0)
    z = m.add_var("z", -1e6, 1e6, obj=1.0)
    add_epigraph(m, curve, x, z, "f")
    return solve_lp(m).objective, m


def test_epigraph_two_rows_at_midpoint():
    c = approximate_quadratic(FUEL_A, 0.0, 0, 600, 2)
    val, m = _min_z(c, 300.0)
    assert m.num_rows == 2
    assert val == pytest.approx(0.1548, abs=1e-9)


def test_epigraph_single_line():
    c = approximate_quadratic(0.0, 2.0, 0, 10, 1)
    rows = emit_epigraph_rows(c, 0, 1)
    assert len(rows) == 1
    assert rows[0] == ({1: 1.0, 0: -2.0}, ">=", 0.0)


def test_epigraph_reproduces_evaluate_at_random_points():
    rng = np.random.default_rng(0)
    c = approximate_quadratic(0.3, -1.0, -4, 6, 8)
    for x0 in rng.uniform(-4, 6, 100):
        val, _ = _min_z(c, float(x0))
        assert val == pytest.approx(evaluate(c, float(x0)), abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(1e-7, 10), b=st.floats(-5, 5), lo=st.floats(-100, 100),
       width=st.floats(1e-3, 500), k=st.integers(1, 32))
def test_secant_over_approximates_within_bound(a, b, lo, width, k):
    hi = lo + width
    c = approximate_quadratic(a, b, lo, hi, k)
    assert c.is_convex
    xs = np.linspace(lo, hi, 1000)
    gap = np.array([evaluate(c, x) for x in xs]) - (a * xs * xs + b * xs)
    scale = 1e-9 * max(1.0, np.abs(a * xs * xs + b * xs).max())
    assert gap.min() >= -scale
    assert gap.max() <= c.max_abs_error + scale


@given(a=st.floats(1e-6, 10), width=st.floats(1e-2, 1e3), k=st.integers(1, 64))
def test_doubling_segments_quarters_error(a, width, k):
    e1 = approximate_quadratic(a, 0, 0, width, k).max_abs_error
    e2 = approximate_quadratic(a, 0, 0, width, 2 * k).max_abs_error
    assert e2 <= e1 / 2
    assert e2 == pytest.approx(e1 / 4)


def test_default_fuel_segments_sub_cent():
    c = approximate_quadratic(FUEL_A, 0.055, 90, 600, 8)
    assert c.max_abs_error <= 0.05
