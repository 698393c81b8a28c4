"""Acceptance criteria 1-10; the conftest prints one PASS/FAIL line per criterion.

Run with pytest or directly: ``python3 tests/test_acceptance.py``.
"""
import dataclasses
import sys
import time
import warnings

import numpy as np
import pytest

from socp import tulczyjew as tz
from socp.bvp_solver import (cost_newlag, cost_newlag_second_order, cost_pmp, integrate_ivp, running_cost,
                             solve_bvp)
from socp.checks import run_suite
from socp.conserved import (derivative_series, energy_monitor, generating_checks, noether_mechanical,
                            noether_newlag, noether_pmp)
from socp.errors import NotInvertibleError
from socp.formulations import (NewLagPoint, classify_ocp_regularity, higher_order_lagrangian,
                               higher_order_lagrangian_d3, hyperregularity_certificate)
from socp.group_actions import phi_translation, polynomial_flow, rotation
from socp.ocp_model import sample_points
from socp.optimality import identify
from socp.registry import PROBLEMS, double_integrator, get_problem, low_thrust

NODE_TOL = 1e-6
COST_TOL = 1e-6
TRACE_TOL = 1e-7
COST_AGREE_TOL = 1e-8
COMPOSE_TOL = 1e-12
PULLBACK_TOL = 1e-10
EQUIV_TOL = 1e-8
DRIFT_TOL = 1e-8
COAST_TOL = 1e-9
RATE_TOL = 1e-6
D3_TOL = 1e-8
N = 200
COARSE = 25
DYNAMIC = ("double_integrator", "low_thrust")


@pytest.fixture(scope="module")
def solves():
    out = {}
    for name in DYNAMIC:
        p = get_problem(name)
        out[name] = {f: solve_bvp(p, f, N=N, coarse_grid=COARSE) for f in ("pmp", "newlag", "newham")}
    return out


def _as_pmp(p, traj):
    return np.array([identify(x, traj.formulation, "pmp", p, u) for x, u in zip(traj.states, traj.controls)])


# -- 1 -------------------------------------------------------------------------------------

def test_criterion_01_double_integrator(record_property):
    p = double_integrator()
    solve_bvp(p, "pmp", guess=[0.0, 0.0], N=20)  # warm-up: imports and first-call caches
    start = time.perf_counter()
    rep = solve_bvp(p, "pmp", guess=[0.0, 0.0], N=N)
    elapsed = time.perf_counter() - start
    record_property("iterations", rep.iterations)
    record_property("seconds", round(elapsed, 3))
    assert rep.converged and rep.iterations <= 10
    t = rep.trajectory.t
    assert np.max(np.abs(rep.trajectory.controls[:, 0] - (6 - 12 * t))) <= NODE_TOL
    assert cost_pmp(p, rep.trajectory) == pytest.approx(6.0, abs=COST_TOL)
    assert running_cost(p, rep.trajectory) == pytest.approx(6.0, abs=COST_TOL)
    assert elapsed < 1.0


# -- 2 -------------------------------------------------------------------------------------

@pytest.mark.parametrize("name", DYNAMIC)
def test_criterion_02_formulation_equivalence(solves, name, record_property):
    p = get_problem(name)
    reps = solves[name]
    assert all(r.converged for r in reps.values())
    ref = reps["pmp"].trajectory.states[:, :2 * p.dim_q]
    worst = 0.0
    for f in ("newlag", "newham"):
        worst = max(worst, float(np.max(np.abs(_as_pmp(p, reps[f].trajectory)[:, :2 * p.dim_q] - ref))))
    record_property(f"{name}_trace_dev", f"{worst:.1e}")
    assert worst <= TRACE_TOL
    # the three augmented costs on one converged solution
    pmp = reps["pmp"].trajectory
    lag = np.array([identify(x, "pmp", "newlag", p, u) for x, u in zip(pmp.states, pmp.controls)])
    lag = dataclasses.replace(pmp, states=lag, formulation="newlag")
    costs = [cost_pmp(p, pmp), cost_newlag_second_order(p, lag), cost_newlag(p, lag)]
    record_property(f"{name}_cost_spread", f"{max(costs) - min(costs):.1e}")
    assert max(costs) - min(costs) <= COST_AGREE_TOL


# -- 3 -------------------------------------------------------------------------------------

@pytest.mark.parametrize("name", list(PROBLEMS))
def test_criterion_03_compositions(name):
    rep = tz.composition_residuals(get_problem(name), n=100, seed=42)
    assert rep.new_lagrangian <= COMPOSE_TOL
    assert rep.new_hamiltonian <= COMPOSE_TOL
    if rep.forced is not None:
        assert rep.forced <= COMPOSE_TOL


# -- 4 -------------------------------------------------------------------------------------

@pytest.mark.parametrize("name", DYNAMIC)
def test_criterion_04_hyperregularity(name, record_property):
    p = get_problem(name)
    qs, vs, a1, a2, us = sample_points(p, 100, np.random.default_rng(42))
    rep = hyperregularity_certificate(p, [NewLagPoint(*z) for z in zip(qs, a1, vs, a2, us)])
    assert rep.abs_is_one and rep.point_independent
    # the sign is reported next to the commonly quoted one, never asserted
    record_property(f"dim_q={p.dim_q} sign", f"{rep.sign:+d} vs quoted {rep.claimed_sign:+d}")


# -- 5 -------------------------------------------------------------------------------------

def test_criterion_05_conservation(solves, record_property):
    drifts = {}
    for name in DYNAMIC:
        p = get_problem(name)
        drifts[name] = energy_monitor(solves[name]["pmp"].trajectory, p).drift
        assert drifts[name] <= DRIFT_TOL
    p = low_thrust()
    traj = solves["low_thrust"]["pmp"].trajectory
    coarse = energy_monitor(integrate_ivp(p, "pmp", traj.states[0], N=N // 2), p).drift
    ratio = coarse / drifts["low_thrust"]
    record_property("energy_ratio", round(ratio, 2))
    assert 8 <= ratio <= 32
    I = noether_pmp(traj, phi_translation(), p)
    IL = noether_newlag(traj, phi_translation(), p)
    record_property("lambda_phi_drift", f"{I.drift:.1e}")
    assert I.drift <= DRIFT_TOL
    np.testing.assert_allclose(I.values, traj.block(2)[:, 1], atol=1e-15)
    assert np.max(np.abs(I.values - IL.values)) <= DRIFT_TOL


# -- 6 -------------------------------------------------------------------------------------

def test_criterion_06_tulczyjew():
    rng = np.random.default_rng(42)
    for dq, du in ((1, 0), (1, 1), (2, 1)):
        for _ in range(20):
            c = rng.normal(size=4 * dq + du)
            pt = tz.TwistedPoint("TT*Q+E", c, dq, du)
            assert np.array_equal(tz.alpha_inv(tz.alpha(pt)).coords, c)
            assert np.array_equal(tz.beta_inv(tz.beta(pt)).coords, c)
            assert np.array_equal(tz.kappa(tz.kappa(tz.TwistedPoint("TTQ+E", c, dq, du))).coords, c)
        ea, eb = tz.pullback_residuals(dq, du)
        assert ea <= PULLBACK_TOL and eb <= PULLBACK_TOL
    pts = [tz.TwistedPoint("TT*Q+E", rng.uniform(-0.4, 0.4, 8), 2, 0) for _ in range(10)]
    for action in (rotation(), polynomial_flow()):
        ea, eb = tz.equivariance_residual(action, pts)
        assert ea <= EQUIV_TOL and eb <= EQUIV_TOL
    failed = [r for r in run_suite("tulczyjew") if not r.passed]
    assert not failed, failed


# -- 7 -------------------------------------------------------------------------------------

@pytest.mark.parametrize("name,verdict", [("scalar_singular", "singular"), ("scalar_regular", "regular"),
                                          ("scalar_superregular", "superregular")])
def test_criterion_07_regularity(name, verdict):
    assert classify_ocp_regularity(get_problem(name), n=100, seed=42).verdict == verdict


# -- 8 -------------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08_generating(record_property):
    start = time.perf_counter()
    rep = generating_checks(double_integrator())
    elapsed = time.perf_counter() - start
    record_property("seconds", round(elapsed, 1))
    record_property("max_D_residual", f"{rep.max_derivative_residual:.1e}")
    assert all(v <= 1e-3 for v in rep.derivative_residuals.values())
    assert rep.mixed_relation <= 1e-8
    assert elapsed < 30.0


# -- 9 -------------------------------------------------------------------------------------

def test_criterion_09_mechanical_negative_control(solves, record_property):
    p = low_thrust()
    traj = solves["low_thrust"]["pmp"].trajectory
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # thrust breaks orthogonality on purpose
        IL = noether_mechanical(traj, phi_translation(), p)
    rate = derivative_series(IL.values, traj.h)
    err = np.max(np.abs(rate - traj.block(0)[:, 0] * traj.controls[:, 0]))
    record_property("rate_error", f"{err:.1e}")
    assert IL.drift > 1e-3
    assert err <= RATE_TOL
    coast = integrate_ivp(p, "pmp", traj.states[0], N=N, fixed_control=[0.0])
    assert noether_mechanical(coast, phi_translation(), p).drift <= COAST_TOL


# -- 10 ------------------------------------------------------------------------------------

def test_criterion_10_higher_order_lagrangian(solves):
    p = double_integrator()
    traj = solves["double_integrator"]["pmp"].trajectory
    q, v, _, lv = (traj.block(i) for i in range(4))
    worst = 0.0
    for qi, vi, ui, lvi in zip(q, v, traj.controls, lv):
        acc = np.asarray(p.Xv(qi, vi, ui), float)
        worst = max(worst, float(np.max(np.abs(higher_order_lagrangian_d3(p, qi, vi, acc) - lvi))))
    assert worst <= D3_TOL
    lt = low_thrust()
    with pytest.raises(NotInvertibleError):
        higher_order_lagrangian(lt, lt.boundary.q0, lt.boundary.v0, np.zeros(2))
    with pytest.raises(NotInvertibleError):
        higher_order_lagrangian_d3(lt, lt.boundary.q0, lt.boundary.v0, np.zeros(2))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
