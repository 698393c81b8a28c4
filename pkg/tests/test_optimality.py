import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socp.errors import ChartError, SingularControlError, UnsupportedFormulationError
from socp.ocp_model import ControlledSode, OcpProblem, RunningCost, TerminalCost, sample_points
from socp.optimality import (field, field_with_control, from_pmp, identify, solve_max_condition, to_pmp,
                             transversality_display_residual, transversality_residual)
from socp.registry import double_integrator, get_problem, low_thrust

FIELD_EQUIV_TOL = 1e-9
CONTROL_TOL = 1e-10
PUSH_STEP = 1e-5


def a(*x):
    return np.array(x, float)


def custom(Xv, C, dim_q=1, dim_u=1, **kw):
    base = double_integrator() if dim_q == 1 else low_thrust()
    return OcpProblem("custom", ControlledSode(dim_q, dim_u, Xv), RunningCost(C), base.boundary, base.box, **kw)


# -- maximization condition -----------------------------------------------------------------

def test_double_integrator_control():
    p = double_integrator()
    assert solve_max_condition(p, "newlag", a(0.3, 2.0, -1.0, 0.5))[0] == pytest.approx(2.0, abs=1e-14)
    assert solve_max_condition(p, "pmp", a(0, 0, 12, 6))[0] == pytest.approx(6.0, abs=1e-14)


def test_quadratic_cost_affine_control_family():
    # Xv = f0 + f1 u, C = u^T g u / 2 gives u* = g^-1 f1^T k
    f1 = np.array([[1.0, 0.5], [-0.3, 2.0]])
    g = np.array([[2.0, 0.4], [0.4, 1.0]])
    p = custom(lambda q, v, u: np.array([v[0] * q[1], -q[0]]) + f1.dot(u), lambda q, v, u: 0.5 * u.dot(g.dot(u)),
               dim_q=2, dim_u=2)
    k = a(0.7, -1.2)
    x = np.concatenate([a(1.1, 0.3), k, a(0.2, 0.4), a(0.1, 0.1)])
    np.testing.assert_allclose(solve_max_condition(p, "newlag", x), np.linalg.solve(g, f1.T @ k), atol=1e-12)


def test_cubic_control_case():
    p = custom(lambda q, v, u: np.array([2.0 * u[0] ** 3]), lambda q, v, u: 0.0 * u[0])
    assert solve_max_condition(p, "newlag", a(0, 1.5, 0, 0))[0] == 0.0
    with pytest.raises(SingularControlError):
        solve_max_condition(p, "newlag", a(0, 0, 0, 0))


def test_control_affine_cost_is_singular():
    p = get_problem("scalar_singular")
    with pytest.raises(SingularControlError):
        solve_max_condition(p, "pmp", a(0, 0.2, 0.1, 1.0))


def test_unknown_formulation():
    with pytest.raises(ChartError):
        field(double_integrator(), "lagrange", a(0, 0, 0, 0))
    with pytest.raises(ChartError):
        identify(a(0, 0, 0, 0), "pmp", "lagrange", double_integrator())


# -- fields and identification ---------------------------------------------------------------

def test_pmp_field_double_integrator():
    np.testing.assert_allclose(field(double_integrator(), "pmp", a(0, 0, 12, 6)), [0, 6, 0, -12], atol=1e-14)


def test_identify_pmp_to_newlag():
    p = double_integrator()
    x = identify(a(0, 0, 12, 6), "pmp", "newlag", p)
    np.testing.assert_allclose(x, [0, 6, 0, -12], atol=1e-14)
    np.testing.assert_allclose(field(p, "newlag", x), [0, -12, 6, 0], atol=1e-14)


def test_identify_newlag_to_newham_costate():
    p = low_thrust()
    x = a(1.1, 0.2, 0.3, -0.4, 0.1, 0.9, 0.6, 0.2)
    pmp = to_pmp(p, "newlag", x)
    ham = identify(x, "newlag", "newham", p)
    np.testing.assert_allclose(ham[4:6], -pmp[4:6], atol=1e-14)


def test_identify_forced_low_thrust_adjoint():
    m = 1.7
    p = low_thrust(m=m)
    q, xi = a(1.2, 0.4), a(0.3, -0.5)
    forced = np.concatenate([q, xi, a(0.2, 0.1), a(m * 0.1, m * 1.44 * 0.9)])
    lag = identify(forced, "forced", "newlag", p)
    np.testing.assert_allclose(lag[2:4], [m * xi[0], m * 1.44 * xi[1]], atol=1e-12)
    np.testing.assert_allclose(lag[4:6], [0.1, 0.9], atol=1e-12)


def test_forced_identification_needs_lagrangian():
    with pytest.raises(UnsupportedFormulationError):
        from_pmp(get_problem("scalar_regular"), "forced", a(0, 0.1, 0.2, 0.3))


def _pushed_pmp_field(p, target, x):
    f = field(p, "pmp", x)
    plus = identify(x + PUSH_STEP * f, "pmp", target, p)
    minus = identify(x - PUSH_STEP * f, "pmp", target, p)
    return (plus - minus) / (2 * PUSH_STEP)


@pytest.mark.parametrize("name", ["double_integrator", "low_thrust", "rot_oscillator", "scalar_regular",
                                  "scalar_superregular"])
@pytest.mark.parametrize("target", ["newlag", "newham", "forced"])
def test_field_equivalence(name, target):
    p = get_problem(name)
    if target == "forced" and p.lagrangian is None:
        pytest.skip("no force-controlled Lagrangian")
    qs, vs, lq, lv, _ = sample_points(p, 100, np.random.default_rng(0))
    worst = 0.0
    for z in zip(qs, vs, lq, lv):
        x = np.concatenate(z)
        pushed = _pushed_pmp_field(p, target, x)
        direct = field(p, target, identify(x, "pmp", target, p))
        worst = max(worst, float(np.max(np.abs(pushed - direct)) / max(1.0, np.max(np.abs(direct)))))
    assert worst <= FIELD_EQUIV_TOL


@pytest.mark.parametrize("name", ["low_thrust", "scalar_regular"])
def test_control_agrees_across_charts(name):
    p = get_problem(name)
    qs, vs, lq, lv, _ = sample_points(p, 50, np.random.default_rng(1))
    for z in zip(qs, vs, lq, lv):
        x = np.concatenate(z)
        u_pmp = field_with_control(p, "pmp", x).u
        for target in ("newlag", "newham"):
            u_t = field_with_control(p, target, identify(x, "pmp", target, p)).u
            np.testing.assert_allclose(u_t, u_pmp, atol=CONTROL_TOL)


# -- transversality ---------------------------------------------------------------------------

def test_transversality_fixed_endpoint():
    res = transversality_residual(double_integrator(), a(0.8, 0.1, 3.0, 4.0), "pmp")
    np.testing.assert_allclose(res, [-0.2, 0.1], atol=1e-15)


def test_transversality_free_without_mayer():
    p = dataclasses.replace(double_integrator(terminal="free"), mayer=None)
    res = transversality_residual(p, a(0.8, 0.1, 3.0, -4.0), "pmp")
    np.testing.assert_allclose(res, [3.0, -4.0], atol=1e-15)
    assert np.linalg.norm(res) == pytest.approx(5.0)


def test_transversality_velocity_mayer_term():
    p = dataclasses.replace(double_integrator(terminal="free"), mayer=TerminalCost(lambda q, v: 0.5 * v.dot(v)))
    x = a(0.8, 0.7, 0.0, -0.2)
    np.testing.assert_allclose(transversality_residual(p, x, "pmp"), [0.0, 0.5], atol=1e-15)
    # the same terminal point expressed in the other charts gives the same residual
    for target in ("newlag", "newham", "forced"):
        np.testing.assert_allclose(transversality_residual(p, identify(x, "pmp", target, p), target),
                                   [0.0, 0.5], atol=1e-13)


def test_transversality_display_is_reported():
    p = low_thrust(terminal="free")
    x = identify(a(1.1, 0.2, 0.1, 0.9, 0.3, -0.2, 0.4, 0.5), "pmp", "newlag", p)
    res = transversality_display_residual(p, x)
    assert res.shape == (2 * p.dim_q,) and np.all(np.isfinite(res))


# -- properties -----------------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.sampled_from(["newlag", "newham", "forced"]))
def test_identify_round_trip(c, target):
    p = double_integrator()
    x = a(*c)
    np.testing.assert_allclose(identify(identify(x, "pmp", target, p), target, "pmp", p), x, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.8, 1.4), st.lists(st.floats(-1, 1), min_size=5, max_size=5))
def test_low_thrust_control_is_stationary(r, c):
    p = low_thrust()
    x = a(r, c[0], c[1], c[2] + 1.0, c[3], c[4], 0.5, 0.5)
    u = solve_max_condition(p, "pmp", x)
    # H = ... + lv_phi * u / r - u^2 / 2, so u* = lv_phi / r
    assert u[0] == pytest.approx(x[7] / r, abs=1e-12)
