import json

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from curveflow import curve_core as cc
from curveflow.errors import ImmersionViolation, NonMonotone


def test_d_theta_sin_is_cos():
    th = cc.theta_grid(64)
    assert np.abs(cc.d_theta(np.sin(th)) - np.cos(th)).max() < 1e-12


def test_d_theta_constant_is_zero():
    assert np.abs(cc.d_theta(np.ones(64))).max() < 1e-13


def test_d_theta_matches_symbolic_derivative():
    x = sympy.symbols("x")
    expr = sympy.sin(3 * x) * sympy.cos(2 * x)
    dexpr = sympy.lambdify(x, sympy.diff(expr, x), "numpy")
    f = sympy.lambdify(x, expr, "numpy")
    th = cc.theta_grid(64)
    assert np.abs(cc.d_theta(f(th)) - dexpr(th)).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(
    k=st.integers(min_value=0, max_value=20),
    a=st.floats(-2.0, 2.0),
    b=st.floats(-2.0, 2.0),
)
def test_d_theta_exact_on_trig_polynomials(k, a, b):
    th = cc.theta_grid(64)
    f = a * np.cos(k * th) + b * np.sin(k * th)
    want = k * (-a * np.sin(k * th) + b * np.cos(k * th))
    assert np.abs(cc.d_theta(f) - want).max() < 1e-10 * max(1.0, k * (abs(a) + abs(b)))


def test_dtheta_matrix_matches_function(rng):
    f = cc.random_smooth_field(rng, 64)
    assert np.abs(cc.dtheta_matrix(64) @ f - cc.d_theta(f)).max() < 1e-12


def test_circle_frame_and_curvature():
    r = 1.7
    c = cc.make_circle(r=r, N=64)
    th = c.theta
    # n = Jv points inward on the positively oriented circle
    assert np.abs(c.n + np.stack([np.cos(th), np.sin(th)], axis=1)).max() < 1e-12
    assert np.abs(c.kappa - 1.0 / r).max() < 1e-10
    assert abs(c.length - 2 * np.pi * r) < 1e-10


def test_ellipse_curvature_closed_form():
    a, b = 2.0, 1.0
    c = cc.make_ellipse(a=a, b=b, N=128)
    th = c.theta
    want = a * b / (a**2 * np.sin(th) ** 2 + b**2 * np.cos(th) ** 2) ** 1.5
    assert np.abs(c.kappa - want).max() < 1e-10


def test_immersion_violation_raises():
    th = cc.theta_grid(32)
    pts = np.stack([np.cos(th) ** 3, np.sin(th) ** 3], axis=1)  # astroid cusps
    with pytest.raises(ImmersionViolation):
        cc.DiscreteCurve(pts)


def test_decompose_recompose_roundtrip(rng, wiggly):
    h = cc.random_smooth_curve_field(rng, 64)
    a, b = cc.decompose(wiggly, h)
    assert np.abs(cc.recompose(wiggly, a, b) - h).max() < 1e-13


def test_eval_periodic_reproduces_grid_values(wiggly):
    out = cc.eval_periodic(wiggly.points, wiggly.theta)
    assert np.abs(out - wiggly.points).max() < 1e-12


def test_reparametrize_shifts_samples():
    c = cc.make_circle(N=64)
    shift = 0.3
    c2 = cc.reparametrize(c, c.theta + shift)
    want = cc.make_circle(N=64).points
    th = c.theta + shift
    assert np.abs(c2.points - np.stack([np.cos(th), np.sin(th)], axis=1)).max() < 1e-10


def test_reparametrize_rejects_non_monotone():
    c = cc.make_circle(N=64)
    with pytest.raises(NonMonotone):
        cc.reparametrize(c, c.theta + 1.1 * np.sin(c.theta))


def test_arclength_resample_gives_constant_speed(wiggly):
    c2 = cc.arclength_resample(wiggly)
    assert cc.is_arclength(c2)
    assert abs(c2.length - wiggly.length) < 1e-8 * wiggly.length


def test_arclength_parameter_endpoints(wiggly):
    s = cc.arclength_parameter(wiggly)
    assert s[0] == 0.0
    assert np.all(np.diff(s) > 0)
    assert s[-1] < wiggly.length  # the last node sits one cell short of a full lap


def test_json_roundtrip(wiggly):
    c2 = cc.DiscreteCurve.from_json(wiggly.to_json())
    assert np.array_equal(c2.points, wiggly.points)


def test_from_json_rejects_bad_count():
    c = cc.make_circle(N=32)
    obj = json.loads(c.to_json())
    obj["n"] = 16
    with pytest.raises(ValueError):
        cc.DiscreteCurve.from_json(json.dumps(obj))


def test_d_s_is_unit_speed_derivative(wiggly):
    # D_s of the position is the unit tangent
    assert np.abs(cc.d_s(wiggly, wiggly.points) - wiggly.v).max() < 1e-10


def test_integrate_recovers_length(wiggly):
    assert abs(wiggly.integrate(np.ones(wiggly.N)) - wiggly.length) < 1e-12
