import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parsearch.analytic import (
    SQRT2,
    Cost,
    RotatedPoint,
    dfb_upper_bound,
    eta_cartesian,
    eta_half_width,
    eta_value,
    from_rotated,
    phi_upper,
    psi_value,
    to_rotated,
    value_upper_bound,
    value_upper_bound_2d,
)

reals = st.floats(-20, 20, allow_nan=False)
costs = st.floats(0.05, 20, allow_nan=False)


def test_cost_validation():
    with pytest.raises(ValueError):
        Cost(0.0)
    with pytest.raises(ValueError):
        Cost(1.0, -1.0)
    Cost(1.0, 0.6).check_hybrid()
    for bad in (0.5, 1.0, 0.3, None):
        with pytest.raises(ValueError):
            Cost(1.0, bad).check_hybrid()


@pytest.mark.parametrize("x, expected", [(-0.5, 0.0), (0.0, 0.0625), (0.25, 0.25)])
def test_psi_examples(x, expected):
    assert psi_value(x, 1.0) == pytest.approx(expected, abs=1e-15)


def test_psi_rejects_bad_cost():
    with pytest.raises(ValueError):
        psi_value(0.0, 0.0)


@given(reals, costs)
def test_psi_dominates_hinge(x, c):
    v = psi_value(x, c)
    assert v >= max(x, 0.0) - 1e-12
    if abs(x) >= 1 / (4 * c):
        assert v == pytest.approx(max(x, 0.0), abs=1e-12)
    else:
        assert v > max(x, 0.0)


@given(costs)
def test_psi_is_c1_at_junctions(c):
    b = 1 / (4 * c)
    d = 1e-7 * b
    for x, left_slope, right_slope in ((-b, 0.0, None), (b, None, 1.0)):
        slope_in = (psi_value(x + d, c) - psi_value(x - d, c)) / (2 * d)
        expected = left_slope if left_slope is not None else right_slope
        assert slope_in == pytest.approx(expected, abs=1e-5)


@pytest.mark.parametrize("t, s, expected", [
    (0.0, 0.0, 0.125),
    (0.0, 1 / (2 * SQRT2), 0.25),
    (SQRT2, 0.0, 1.125),
])
def test_eta_examples(t, s, expected):
    assert eta_value(t, s, 1.0) == pytest.approx(expected, abs=1e-15)


@given(reals, reals, costs)
def test_eta_dominates_g_on_diagonal_frame(t, s, theta):
    v = eta_value(t, s, theta)
    floor = (t + abs(s)) / SQRT2
    assert v >= floor - 1e-10
    if abs(s) > eta_half_width(theta) * (1 + 1e-12):
        assert v == pytest.approx(floor, abs=1e-10)


def test_eta_rejects_bad_theta():
    with pytest.raises(ValueError):
        eta_value(0.0, 0.0, -1.0)


def test_eta_cartesian_matches_rotated():
    x1, x2 = 0.3, -0.1
    t, s = to_rotated(x1, x2)
    assert eta_cartesian(x1, x2, 2.0) == pytest.approx(eta_value(t, s, 2.0))


@given(reals, reals)
def test_rotation_round_trip(x1, x2):
    p = RotatedPoint.from_cartesian(x1, x2)
    back = p.to_cartesian()
    assert back[0] == pytest.approx(x1, abs=1e-12)
    assert back[1] == pytest.approx(x2, abs=1e-12)
    t, s = to_rotated(x1, x2)
    y1, y2 = from_rotated(t, s)
    assert (y1, y2) == pytest.approx((x1, x2), abs=1e-12)


def test_phi_examples():
    assert phi_upper(0.0, 0.0, 1.0, 0.5) == pytest.approx(0.5)
    assert phi_upper(0.0, 3.0, 1.0, 0.5) == pytest.approx(0.25 + 3 / SQRT2)
    alpha = 2 * np.sqrt(0.5)
    t = 1 / alpha + 0.3
    assert phi_upper(t, 0.1, 1.0, 0.5) == pytest.approx(eta_value(t, 0.1, 0.5))


@pytest.mark.parametrize("eps", [0.0, 1.0, 1.5, -0.1])
def test_phi_rejects_eps_outside_open_interval(eps):
    with pytest.raises(ValueError):
        phi_upper(1.0, 0.0, 1.0, eps)


@given(st.floats(0, 20), reals, st.floats(0.01, 0.99))
def test_sandwich_ordering(t, s, frac):
    c = 1.0
    assert eta_value(t, s, c) <= phi_upper(t, s, c, frac * c) + 1e-12


def test_dfb_examples():
    assert dfb_upper_bound(1.0, 1.0) == pytest.approx(0.08838834764831845)
    assert dfb_upper_bound(2.0, 0.5) == pytest.approx(0.1767766952966369)
    assert dfb_upper_bound(1e4, 1.0) < 1e-9
    with pytest.raises(ValueError):
        dfb_upper_bound(0.4, 1.0)


@given(st.floats(1, 50), st.floats(1, 5))
def test_dfb_decreasing(T, c):
    assert dfb_upper_bound(T * 1.1, c) < dfb_upper_bound(T, c)
    assert dfb_upper_bound(T, c * 1.1) < dfb_upper_bound(T, c)


@pytest.mark.parametrize("x1, x2, expected", [(0, 0, 0.25), (-3, -3, 0.25), (2, 1, 3.25)])
def test_value_upper_bound_2d(x1, x2, expected):
    assert value_upper_bound_2d(x1, x2, 1.0) == pytest.approx(expected)


def test_value_upper_bound_generic():
    pts = np.array([[1.0, -2.0, 0.5]])
    assert value_upper_bound(pts, 0.1)[0] == pytest.approx(3.6)


def test_second_differences_match_curvature():
    c, h = 1.0, 1e-3
    for x in (-0.1, 0.05):  # parabolic branch
        d2 = (psi_value(x + h, c) - 2 * psi_value(x, c) + psi_value(x - h, c)) / h**2
        assert d2 == pytest.approx(2 * c, rel=1e-6)
    for x in (-1.0, 1.0):
        d2 = (psi_value(x + h, c) - 2 * psi_value(x, c) + psi_value(x - h, c)) / h**2
        assert abs(d2) < 1e-6
    theta = 1.5
    d2 = (eta_value(0.3, h, theta) - 2 * eta_value(0.3, 0.0, theta) + eta_value(0.3, -h, theta)) / h**2
    assert d2 == pytest.approx(2 * theta, rel=1e-6)


def test_vectorised_shapes():
    x = np.linspace(-1, 1, 7)
    assert psi_value(x, 1.0).shape == (7,)
    assert np.ndim(psi_value(0.1, 1.0)) == 0
