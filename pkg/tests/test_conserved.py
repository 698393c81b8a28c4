import dataclasses
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socp.bvp_solver import integrate_ivp, solve_bvp
from socp.conserved import (MonitorSeries, derivative_series, energy_monitor, force_orthogonality,
                            generating_checks, hamiltonian_monitor, momentum_gradients, noether_forced,
                            noether_mechanical, noether_newham, noether_newlag, noether_pmp, symmetry_residual,
                            transversality_consistency)
from socp.errors import UnsupportedFormulationError
from socp.group_actions import OneParamAction, phi_translation, rotation
from socp.ocp_model import RunningCost, TerminalCost
from socp.optimality import identify
from socp.registry import double_integrator, get_problem, low_thrust

DRIFT_TOL = 1e-8
AGREE_TOL = 1e-8


def a(*x):
    return np.array(x, float)


@pytest.fixture(scope="module")
def di():
    p = double_integrator()
    return p, solve_bvp(p, "pmp", N=200).trajectory


@pytest.fixture(scope="module")
def lt():
    p = low_thrust()
    rep = solve_bvp(p, "pmp", N=200, coarse_grid=25)
    assert rep.converged
    return p, rep.trajectory


@pytest.fixture(scope="module")
def osc():
    p = get_problem("rot_oscillator")
    rep = solve_bvp(p, "pmp", N=200, coarse_grid=25)
    assert rep.converged
    return p, rep.trajectory


def reversed_rotation():
    r = rotation()
    return OneParamAction("reversed", 2, lambda s, q: r.phi(-s, q), lambda s, q: r.dphi(-s, q),
                          generator=lambda q: -r.generator(q))


# -- energy ------------------------------------------------------------------------------------

def test_energy_and_hamiltonian_on_extremal(di):
    p, traj = di
    E, H = energy_monitor(traj, p), hamiltonian_monitor(traj, p)
    np.testing.assert_allclose(E.values, -18.0, atol=1e-9)
    np.testing.assert_allclose(H.values, 18.0, atol=1e-9)
    assert E.drift <= 1e-9


def test_energy_drift_flags_non_extremal(di):
    # a perturbed initial adjoint just gives another extremal (E still constant),
    # so the trace keeps its states and gets a control that is not the maximizer
    p, traj = di
    bent = dataclasses.replace(traj, controls=traj.controls + 0.2 * np.sin(2 * np.pi * traj.t)[:, None])
    assert energy_monitor(bent, p).drift > 1e-3
    other = integrate_ivp(p, "pmp", a(0, 0, 12.5, 6.2), N=200)
    assert energy_monitor(other, p).drift <= 1e-9


def test_energy_drift_order(lt):
    p, _ = lt
    x0 = np.concatenate([p.boundary.q0, p.boundary.v0, a(0.3, -0.2), a(0.1, 0.4)])
    drifts = [energy_monitor(integrate_ivp(p, "pmp", x0, N=n), p).drift for n in (10, 20)]
    assert 8 <= drifts[0] / drifts[1] <= 32


def test_monitor_drift_definition():
    assert MonitorSeries("x", a(1, 3, 0.5)).drift == 2.0


# -- Noether -----------------------------------------------------------------------------------

def test_low_thrust_angular_costate(lt):
    p, traj = lt
    I = noether_pmp(traj, phi_translation(), p)
    np.testing.assert_allclose(I.values, traj.block(2)[:, 1], atol=1e-15)
    assert I.drift <= DRIFT_TOL


@pytest.mark.parametrize("fixture,action", [("lt", phi_translation()), ("osc", rotation())],
                         ids=["low_thrust", "rot_oscillator"])
def test_momenta_agree_across_charts(request, fixture, action):
    p, traj = request.getfixturevalue(fixture)
    I = noether_pmp(traj, action, p)
    assert I.drift <= DRIFT_TOL
    np.testing.assert_allclose(noether_newlag(traj, action, p).values, I.values, atol=AGREE_TOL)
    np.testing.assert_allclose(noether_newham(traj, action, p).values, I.values, atol=AGREE_TOL)
    # the forced chart carries w_q = -lam_q + ..., so its momentum is -I
    np.testing.assert_allclose(noether_forced(traj, action, p).values, -I.values, atol=AGREE_TOL)


def test_reversed_action_flips_sign(osc):
    p, traj = osc
    fwd = noether_pmp(traj, rotation(), p).values
    back = noether_pmp(traj, reversed_rotation(), p).values
    np.testing.assert_allclose(back, -fwd, atol=1e-15)


def test_running_cost_broken_symmetry():
    base = low_thrust()
    C = base.cost.C
    p = dataclasses.replace(base, cost=RunningCost(lambda q, v, u: C(q, v, u) + 0.5 * q[1]))
    x0 = np.concatenate([p.boundary.q0, p.boundary.v0, a(0.1, 0.2), a(0.0, 0.3)])
    traj = integrate_ivp(p, "pmp", x0, N=100)
    with pytest.warns(RuntimeWarning, match="not invariant"):
        I = noether_pmp(traj, phi_translation(), p)
    # d/dt lam_phi = dC/dphi = 0.5
    assert I.drift == pytest.approx(0.5, abs=1e-10)


def test_terminal_cost_does_not_break_interior_invariance():
    # an angle-dependent terminal cost leaves the Hamiltonian symmetric
    base = low_thrust(terminal="free")
    p = dataclasses.replace(base, mayer=TerminalCost(lambda q, v: 3.0 * q[1] ** 2))
    assert symmetry_residual(p, phi_translation()) <= 1e-12
    rep = solve_bvp(p, "pmp", N=50, coarse_grid=25)
    assert rep.converged
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert noether_pmp(rep.trajectory, phi_translation(), p).drift <= DRIFT_TOL


def test_mechanical_momentum_under_thrust(lt):
    p, traj = lt
    assert np.max(force_orthogonality(traj, phi_translation(), p)) > 1e-3
    with pytest.warns(RuntimeWarning, match="not orthogonal"):
        IL = noether_mechanical(traj, phi_translation(), p)
    assert IL.drift > 1e-3
    # d/dt (m r^2 phi') = m r u
    r = traj.block(0)[:, 0]
    rate = derivative_series(IL.values, traj.h)
    np.testing.assert_allclose(rate[5:-5], (r * traj.controls[:, 0])[5:-5], atol=1e-6)


def test_mechanical_momentum_without_thrust(lt):
    p, traj = lt
    mid = traj.states[len(traj.t) // 2]
    coast = integrate_ivp(p, "pmp", mid, N=200, fixed_control=[0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert noether_mechanical(coast, phi_translation(), p).drift <= 1e-9


def test_oscillator_has_two_independent_integrals(osc):
    p, traj = osc
    IL = noether_mechanical(traj, rotation(), p)
    ILt = noether_forced(traj, rotation(), p)
    assert IL.drift <= DRIFT_TOL
    assert ILt.drift <= DRIFT_TOL
    for i in (0, 50, 100, 150, 200):
        x = identify(traj.states[i], "pmp", "forced", p, traj.controls[i])
        g1, g2 = momentum_gradients(p, rotation(), x)
        cos = abs(g1 @ g2) / (np.linalg.norm(g1) * np.linalg.norm(g2))
        assert cos < 1 - 1e-6


def test_mechanical_needs_lagrangian():
    p = get_problem("scalar_regular")
    traj = integrate_ivp(p, "pmp", a(0, 0, 0.1, -1.0), N=10)
    with pytest.raises(UnsupportedFormulationError):
        noether_mechanical(traj, rotation(), p)


def test_derivative_series_is_fourth_order():
    t = np.linspace(0, 1, 41)
    d = derivative_series(np.sin(3 * t), t[1] - t[0])
    np.testing.assert_allclose(d, 3 * np.cos(3 * t), atol=5e-5)
    with pytest.raises(ValueError):
        derivative_series([1, 2, 3], 0.1)


# -- generating functions ---------------------------------------------------------------------

@pytest.mark.slow
def test_generating_checks_double_integrator(di):
    p, traj = di
    rep = generating_checks(p, base=traj)
    assert rep.max_derivative_residual <= 1e-3
    assert rep.mixed_relation <= 1e-8
    assert rep.bracket_residual <= 1e-3


def test_transversality_consistency(di):
    p, traj = di
    assert transversality_consistency(p, traj) <= 1e-8


# -- properties ----------------------------------------------------------------------------------

@settings(max_examples=10, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_oscillator_momentum_conserved_from_any_start(lq0, lq1, lv0, lv1):
    p = get_problem("rot_oscillator")
    x0 = np.concatenate([p.boundary.q0, p.boundary.v0, a(lq0, lq1), a(lv0, lv1)])
    traj = integrate_ivp(p, "pmp", x0, N=50)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert noether_pmp(traj, rotation(), p).drift <= 1e-9
