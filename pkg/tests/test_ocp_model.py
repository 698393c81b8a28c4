import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socp.errors import DomainError, RegularityError
from socp.ocp_model import (ControlledSode, ForceControlledLagrangianSystem, actuation_classify,
                            sample_points, sode_from_lagrangian, validate_problem)
from socp.registry import PROBLEMS, get_problem, low_thrust

EL_TOL = 1e-10


def test_unit_mass_sode():
    lag = ForceControlledLagrangianSystem(1, 1, lambda q, v: 0.5 * v[0] ** 2, lambda q, v, u: np.array([u[0]]))
    Xv = sode_from_lagrangian(lag).Xv
    assert Xv(np.array([0.3]), np.array([-1.0]), np.array([2.5]))[0] == pytest.approx(2.5, abs=1e-14)


def test_low_thrust_equations_of_motion():
    p = low_thrust()
    Xv = sode_from_lagrangian(p.lagrangian).Xv
    q, v, u = np.array([1.2, 0.4]), np.array([0.1, 0.9]), np.array([0.3])
    r, vr, vphi = 1.2, 0.1, 0.9
    expected = [r * vphi ** 2 - 1 / r ** 2, -2 * vr * vphi / r + 0.3 / r]
    np.testing.assert_allclose(Xv(q, v, u), expected, atol=1e-14)


def test_shifted_velocity_lagrangian():
    # L = (v - q)^2 / 2 with force f: D1L = q - v, D12L = -1, so Xv = q + f
    lag = ForceControlledLagrangianSystem(1, 1, lambda q, v: 0.5 * (v[0] - q[0]) ** 2,
                                          lambda q, v, u: np.array([u[0]]))
    Xv = sode_from_lagrangian(lag).Xv
    for q, v, u in [(0.5, 2.0, 0.1), (-1.0, 0.3, 2.0)]:
        assert Xv(np.array([q]), np.array([v]), np.array([u]))[0] == pytest.approx(q + u, abs=1e-14)


def test_singular_mass_matrix():
    lag = ForceControlledLagrangianSystem(1, 1, lambda q, v: q[0] * v[0], lambda q, v, u: np.array([u[0]]))
    with pytest.raises(RegularityError) as err:
        sode_from_lagrangian(lag).Xv(np.array([1.0]), np.array([1.0]), np.array([0.0]))
    assert err.value.condition is not None


def _samples(p, n=100, seed=42):
    qs, vs, _, _, us = sample_points(p, n, np.random.default_rng(seed))
    return list(zip(qs, vs, us))


def test_actuation_double_integrator_full():
    p = get_problem("double_integrator")
    assert actuation_classify(p.sode, _samples(p)) == "full"


def test_actuation_low_thrust_under():
    p = get_problem("low_thrust")
    assert actuation_classify(p.sode, _samples(p)) == "under"


def test_actuation_affine_invertible_input():
    B = np.array([[2.0, 1.0], [0.5, 3.0]])
    sode = ControlledSode(2, 2, lambda q, v, u: -q + np.array([np.sin(v[0]), v[1] ** 2]) + B @ u)
    rng = np.random.default_rng(0)
    samples = [tuple(rng.normal(size=(3, 2))) for _ in range(20)]
    assert actuation_classify(sode, samples) == "full"


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0), st.floats(0.2, 3.0))
def test_actuation_invariant_under_control_reparametrization(a, b, c):
    A = np.array([[a, b], [0.0, c]])
    p = get_problem("low_thrust")
    wide = ControlledSode(2, 2, lambda q, v, u: p.Xv(q, v, u[:1]) + np.array([u[1], 0.0]))
    mapped = ControlledSode(2, 2, lambda q, v, u: wide.Xv(q, v, A @ u))
    rng = np.random.default_rng(1)
    samples = [(np.array([1.0, 0.2]) + 0.1 * rng.normal(size=2), rng.normal(size=2), rng.normal(size=2))
               for _ in range(10)]
    assert actuation_classify(wide, samples) == actuation_classify(mapped, samples) == "full"
    narrow = ControlledSode(2, 2, lambda q, v, u: p.Xv(q, v, (A @ u)[:1]))
    assert actuation_classify(narrow, samples) == "under"


@pytest.mark.parametrize("name", list(PROBLEMS))
def test_registry_problems_validate(name):
    d = validate_problem(get_problem(name))
    assert d.ok, d.errors


@pytest.mark.parametrize("name", ["double_integrator", "low_thrust", "rot_oscillator"])
def test_lagrangian_expansion_matches_registered_sode(name):
    d = validate_problem(get_problem(name), n=100)
    assert d.checks["lagrangian_residual"] <= EL_TOL


def test_mismatched_dimensions_are_listed():
    p = get_problem("low_thrust")
    broken = dataclasses.replace(p, sode=ControlledSode(2, 1, lambda q, v, u: np.array([u[0]])))
    d = validate_problem(broken)
    assert not d.ok
    assert any(e.startswith("dimension") for e in d.errors)


def test_low_thrust_radius_domain():
    p = get_problem("low_thrust")
    with pytest.raises(DomainError):
        p.Xv(np.array([0.0, 0.0]), np.array([0.0, 1.0]), np.array([0.0]))


def test_boundary_modes():
    assert get_problem("double_integrator").boundary.terminal == "fixed"
    p = get_problem("rot_oscillator")
    assert p.boundary.terminal == "free" and p.mayer is not None
    with pytest.raises(ValueError):
        get_problem("double_integrator", T=-1.0)
