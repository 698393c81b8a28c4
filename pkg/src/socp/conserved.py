"""Energy and Noether monitors along trajectories, and generating-function checks.

Every monitor works on a :class:`~socp.bvp_solver.Trajectory` of any chart;
points are transported to the chart the monitored quantity lives in.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .bvp_solver import Trajectory, integrate_ivp, newton_solve, pmp_velocity, solve_bvp
from .errors import SocpError, UnsupportedFormulationError
from .formulations import NewLagPoint, PmpPoint, new_energy, new_lagrangian, pontryagin_h, reduced_jet
from .group_actions import OneParamAction, generator_of, invariance_residual
from .ocp_model import BoundarySpec, OcpProblem, lagrangian_jet, sample_points
from .optimality import identify, transversality_residual

SYMMETRY_TOL = 1e-9
ORTHOGONALITY_TOL = 1e-10


@dataclass(frozen=True)
class MonitorSeries:
    name: str
    values: np.ndarray

    @property
    def drift(self) -> float:
        return float(np.max(np.abs(self.values - self.values[0])))


def _states_in(p: OcpProblem, traj: Trajectory, chart: str) -> np.ndarray:
    if traj.formulation == chart:
        return traj.states
    return np.array([identify(x, traj.formulation, chart, p, u) for x, u in zip(traj.states, traj.controls)])


def _split(x, n):
    return x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:]


# -- energy ------------------------------------------------------------------------------

def energy_monitor(traj: Trajectory, p: OcpProblem) -> MonitorSeries:
    """Energy of the new Lagrangian at every node."""
    n = p.dim_q
    xs = _states_in(p, traj, "newlag")
    vals = [new_energy(p, NewLagPoint(*_split(x, n), u)) for x, u in zip(xs, traj.controls)]
    return MonitorSeries("E", np.array(vals))


def hamiltonian_monitor(traj: Trajectory, p: OcpProblem) -> MonitorSeries:
    """Pontryagin Hamiltonian (cost multiplier -1) at every node."""
    n = p.dim_q
    xs = _states_in(p, traj, "pmp")
    vals = [pontryagin_h(p, PmpPoint(*_split(x, n), u)) for x, u in zip(xs, traj.controls)]
    return MonitorSeries("H", np.array(vals))


# -- symmetry checks ---------------------------------------------------------------------

def symmetry_residual(p: OcpProblem, action: OneParamAction, n: int = 20, seed: int = 42) -> float:
    """Largest change of the Pontryagin Hamiltonian under the lifted action at sampled points."""
    rng = np.random.default_rng(seed)
    qs, vs, a1, a2, us = sample_points(p, n, rng)
    m = p.dim_q

    def h(pt):
        return pontryagin_h(p, PmpPoint(*_split(pt[:4 * m], m), pt[4 * m:]))

    worst = 0.0
    for k in range(n):
        pt = np.concatenate([qs[k], vs[k], a1[k], a2[k], us[k]])
        worst = max(worst, invariance_residual(h, action, pt, "T*TQ"))
    return worst


def _warn_if_asymmetric(p: OcpProblem, action: OneParamAction) -> float:
    res = symmetry_residual(p, action)
    if res > SYMMETRY_TOL:
        warnings.warn(f"problem {p.name!r} is not invariant under {action.name!r} "
                      f"(residual {res:.3g}); the momentum need not be conserved", RuntimeWarning, stacklevel=3)
    return res


# -- Noether momenta -----------------------------------------------------------------------

def noether_pmp(traj: Trajectory, action: OneParamAction, p: OcpProblem, check: bool = True) -> MonitorSeries:
    """``lam_q . X(q) + lam_v . DX(q) v`` along the trace."""
    if check:
        _warn_if_asymmetric(p, action)
    gen = generator_of(action)
    n = p.dim_q
    vals = []
    for x in _states_in(p, traj, "pmp"):
        q, v, lq, lv = _split(x, n)
        X, dX = gen.tangent(q, v)
        vals.append(lq @ X + lv @ dX)
    return MonitorSeries(f"I_{action.name}", np.array(vals))


def noether_newlag(traj: Trajectory, action: OneParamAction, p: OcpProblem, check: bool = True) -> MonitorSeries:
    """Momentum of the new Lagrangian: ``-(v_k + D_v F) . X(q) + k . DX(q) v_q``."""
    if check:
        _warn_if_asymmetric(p, action)
    gen = generator_of(action)
    n = p.dim_q
    vals = []
    for x, u in zip(_states_in(p, traj, "newlag"), traj.controls):
        q, k, vq, vk = _split(x, n)
        Fv = reduced_jet(p, q, vq, k, u, order=1).d("v")
        X, dX = gen.tangent(q, vq)
        vals.append(-(vk + Fv) @ X + k @ dX)
    return MonitorSeries(f"I_newlag_{action.name}", np.array(vals))


def noether_newham(traj: Trajectory, action: OneParamAction, p: OcpProblem, check: bool = True) -> MonitorSeries:
    """Hamiltonian form ``-p_y . X^{T*Q}(y)`` with ``y = (q, k)`` and ``p_y = (p_q, p_k)``."""
    if check:
        _warn_if_asymmetric(p, action)
    gen = generator_of(action)
    n = p.dim_q
    vals = []
    for x in _states_in(p, traj, "newham"):
        q, k, pq, pk = _split(x, n)
        Xq, Xk = gen.cotangent(q, k)
        vals.append(-(pq @ Xq + pk @ Xk))
    return MonitorSeries(f"I_newham_{action.name}", np.array(vals))


def force_orthogonality(traj: Trajectory, action: OneParamAction, p: OcpProblem) -> np.ndarray:
    """Per-node ``|fL . X(q)|`` scaled by ``1 + |fL|``."""
    lag = p.lagrangian
    gen = generator_of(action)
    q = traj.block(0)
    v = pmp_velocity(p, traj)
    out = []
    for a, b, u in zip(q, v, traj.controls):
        f = np.asarray(lag.fL(a, b, u), float)
        out.append(abs(f @ gen.XQ(a)) / (1.0 + np.linalg.norm(f)))
    return np.array(out)


def noether_mechanical(traj: Trajectory, action: OneParamAction, p: OcpProblem) -> MonitorSeries:
    """Mechanical momentum ``D2 L(q, v) . X(q)``.

    Warns when the force is not orthogonal to the generator somewhere on the
    trace (the momentum is then not expected to be conserved).
    """
    if p.lagrangian is None:
        raise UnsupportedFormulationError(f"problem {p.name!r} has no force-controlled Lagrangian")
    orth = force_orthogonality(traj, action, p)
    if np.max(orth) > ORTHOGONALITY_TOL:
        warnings.warn(f"force is not orthogonal to {action.name!r} on the trace "
                      f"(max {np.max(orth):.3g}); mechanical momentum is not a first integral",
                      RuntimeWarning, stacklevel=2)
    gen = generator_of(action)
    q = traj.block(0)
    v = pmp_velocity(p, traj)
    vals = [lagrangian_jet(p.lagrangian, a, b)[1] @ gen.XQ(a) for a, b in zip(q, v)]
    return MonitorSeries(f"IL_{action.name}", np.array(vals))


def noether_forced(traj: Trajectory, action: OneParamAction, p: OcpProblem) -> MonitorSeries:
    """Momentum of the forced new Lagrangian: ``w_q . X(q) + w_xi . DX(q) xi``."""
    gen = generator_of(action)
    n = p.dim_q
    vals = []
    for x in _states_in(p, traj, "forced"):
        q, xi, wq, wxi = _split(x, n)
        X, dX = gen.tangent(q, xi)
        vals.append(wq @ X + wxi @ dX)
    return MonitorSeries(f"ILt_{action.name}", np.array(vals))


def momentum_gradients(p: OcpProblem, action: OneParamAction, x_forced, step: float = 1e-6):
    """Gradients (forced chart) of the mechanical momentum and of the forced new-Lagrangian momentum."""
    gen = generator_of(action)
    n = p.dim_q

    def IL(x):
        q, _, _, wxi = _split(x, n)
        return wxi @ gen.XQ(q)

    def ILt(x):
        q, xi, wq, wxi = _split(x, n)
        X, dX = gen.tangent(q, xi)
        return wq @ X + wxi @ dX

    x = np.asarray(x_forced, float)
    grads = []
    for fn in (IL, ILt):
        g = np.empty(x.size)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = step
            g[i] = (fn(x + e) - fn(x - e)) / (2 * step)
        grads.append(g)
    return grads


def derivative_series(values, h: float) -> np.ndarray:
    """Fourth-order finite-difference time derivative of a node series."""
    y = np.asarray(values, float)
    n = len(y)
    if n < 5:
        raise ValueError("need at least five nodes")
    d = np.empty(n)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[0] = fwd @ y[:5]
    d[1] = np.array([-3, -10, 18, -6, 1]) / (12 * h) @ y[:5]
    d[-1] = -fwd @ y[-1:-6:-1]
    d[-2] = -(np.array([-3, -10, 18, -6, 1]) / (12 * h)) @ y[-1:-6:-1]
    return d


# -- generating functions -------------------------------------------------------------------

def _sub_problem(p: OcpProblem, qa, va, qb, vb, tau) -> OcpProblem:
    b = BoundarySpec(float(tau), np.asarray(qa, float), np.asarray(va, float), "fixed",
                     np.asarray(qb, float), np.asarray(vb, float))
    return dataclasses.replace(p, boundary=b, mayer=None)


def _window_nodes(traj: Trajectory, window):
    a, b = window
    ia = int(round((a - traj.t[0]) / traj.h))
    ib = int(round((b - traj.t[0]) / traj.h))
    if not (0 < ia < ib < traj.N) or abs(traj.t[ia] - a) > 1e-9 or abs(traj.t[ib] - b) > 1e-9:
        raise ValueError(f"window {window} must be interior grid nodes")
    return ia, ib


def action_first_kind(p: OcpProblem, qa, va, qb, vb, tau, N, guess):
    """Running-cost integral along the fixed-endpoint extremal joining (qa, va) to (qb, vb)."""
    sub = _sub_problem(p, qa, va, qb, vb, tau)
    rep = solve_bvp(sub, "pmp", guess, N, tol=1e-11)
    if not rep.converged:
        raise SocpError(f"inner BVP did not converge (residual {rep.residual:.3g})")
    tr = rep.trajectory
    c = np.array([float(p.C(a, b, u)) for a, b, u in zip(tr.block(0), tr.block(1), tr.controls)])
    return float(simpson(c, x=tr.t)), rep


def _mixed_solve(p: OcpProblem, qa, ka, qb, kb, tau, N, guess):
    """Extremal in the new-Lagrangian chart with (q, k) prescribed at both ends."""
    n = p.dim_q

    def x0(z):
        return np.concatenate([qa, ka, z[:n], z[n:]])

    def res(z):
        tr = integrate_ivp(p, "newlag", x0(z), N, T=tau)
        if not tr.complete:
            return np.full(2 * n, np.inf)
        q, k, _, _ = _split(tr.final(), n)
        return np.concatenate([q - qb, k - kb])

    out = newton_solve(res, guess, tol=1e-11)
    if not out.converged:
        raise SocpError("inner mixed BVP did not converge")
    return integrate_ivp(p, "newlag", x0(out.z), N, T=tau), out.z


def action_new_lagrangian(p: OcpProblem, qa, ka, qb, kb, tau, N, guess):
    """Integral of the new Lagrangian along the extremal with (q, k) fixed at both ends."""
    tr, z = _mixed_solve(p, qa, ka, qb, kb, tau, N, guess)
    n = p.dim_q
    vals = [new_lagrangian(p, NewLagPoint(*_split(x, n), u)) for x, u in zip(tr.states, tr.controls)]
    return float(simpson(np.array(vals), x=tr.t)), tr, z


@dataclass
class GeneratingReport:
    derivative_residuals: dict[str, float]
    mixed_relation: float
    bracket_residual: float

    @property
    def max_derivative_residual(self) -> float:
        return max(self.derivative_residuals.values())


def generating_checks(p: OcpProblem, formulation: str = "pmp", window=(0.2, 0.8), N: int = 200,
                      eps: float = 1e-4, base: Trajectory | None = None) -> GeneratingReport:
    """Derivative identities of the two generating functions on an interior window.

    The first-kind function is the cost of the fixed-endpoint extremal between
    the window ends; its endpoint derivatives are compared with the adjoints
    ``(-lam_q^a, -lam_v^a, lam_q^b, lam_v^b)``.  The new-Lagrangian function
    is the integral of the new Lagrangian with (q, k) fixed at both ends; its
    derivatives are compared with ``(lam_q^a, -v_a, -lam_q^b, v_b)``.  Each
    derivative is a central difference over re-solved neighbouring problems.
    """
    if base is None:
        rep = solve_bvp(p, formulation, N=N)
        if not rep.converged:
            raise SocpError("base BVP did not converge")
        base = rep.trajectory
    n = p.dim_q
    ia, ib = _window_nodes(base, window)
    tau = base.t[ib] - base.t[ia]
    sub_n = ib - ia
    pmp_a = identify(base.states[ia], base.formulation, "pmp", p, base.controls[ia])
    pmp_b = identify(base.states[ib], base.formulation, "pmp", p, base.controls[ib])
    qa, va, lqa, lva = _split(pmp_a, n)
    qb, vb, lqb, lvb = _split(pmp_b, n)
    resid: dict[str, float] = {}

    # first kind: variables (qa, va, qb, vb)
    ends = np.concatenate([qa, va, qb, vb])
    expected = np.concatenate([-lqa, -lva, lqb, lvb])
    guess = np.concatenate([lqa, lva])
    labels = [f"S_C/{blk}{i}" for blk in ("qa", "va", "qb", "vb") for i in range(n)]
    for j, lab in enumerate(labels):
        vals = []
        for sgn in (1, -1):
            e = ends.copy()
            e[j] += sgn * eps
            vals.append(action_first_kind(p, e[:n], e[n:2 * n], e[2 * n:3 * n], e[3 * n:], tau, sub_n, guess)[0])
        resid[lab] = abs((vals[0] - vals[1]) / (2 * eps) - expected[j])

    # new Lagrangian: variables (qa, ka, qb, kb) with k = lam_v
    ka, kb = lva, lvb
    ends = np.concatenate([qa, ka, qb, kb])
    expected = np.concatenate([lqa, -va, -lqb, vb])
    nl_a = identify(pmp_a, "pmp", "newlag", p, base.controls[ia])
    guess = np.concatenate([nl_a[2 * n:3 * n], nl_a[3 * n:]])
    labels = [f"S_L/{blk}{i}" for blk in ("qa", "ka", "qb", "kb") for i in range(n)]
    # D_k[k_b . v_b - k_a . v_a - S] with v held fixed: -v_a - D_ka S and v_b - D_kb S
    bracket = []
    for j, lab in enumerate(labels):
        vals = []
        for sgn in (1, -1):
            e = ends.copy()
            e[j] += sgn * eps
            vals.append(action_new_lagrangian(p, e[:n], e[n:2 * n], e[2 * n:3 * n], e[3 * n:], tau, sub_n, guess)[0])
        fd = (vals[0] - vals[1]) / (2 * eps)
        resid[lab] = abs(fd - expected[j])
        i = j % n
        if lab.startswith("S_L/ka"):
            bracket.append(abs(-va[i] - fd))
        elif lab.startswith("S_L/kb"):
            bracket.append(abs(vb[i] - fd))

    # mixed-kind relation on the base trace window (pure quadrature)
    q_w = base.block(0)[ia:ib + 1]
    v_w = pmp_velocity(p, base)[ia:ib + 1]
    u_w = base.controls[ia:ib + 1]
    t_w = base.t[ia:ib + 1]
    nl_w = _states_in(p, base, "newlag")[ia:ib + 1]
    L_vals = [new_lagrangian(p, NewLagPoint(*_split(x, n), u)) for x, u in zip(nl_w, u_w)]
    C_vals = [float(p.C(a, b, u)) for a, b, u in zip(q_w, v_w, u_w)]
    S_L_w = float(simpson(np.array(L_vals), x=t_w))
    S_C_w = float(simpson(np.array(C_vals), x=t_w))
    k_w = nl_w[:, n:2 * n]
    mixed = abs(k_w[-1] @ v_w[-1] - k_w[0] @ v_w[0] - S_L_w - S_C_w)
    return GeneratingReport(resid, float(mixed), float(max(bracket)))


def transversality_consistency(p: OcpProblem, traj: Trajectory) -> float:
    """Residual of the terminal conditions on a solved trace (for reporting)."""
    return float(np.max(np.abs(transversality_residual(p, traj.final(), traj.formulation))))


__all__ = [
    "MonitorSeries", "energy_monitor", "hamiltonian_monitor", "symmetry_residual",
    "noether_pmp", "noether_newlag", "noether_newham", "noether_mechanical", "noether_forced",
    "force_orthogonality", "momentum_gradients", "derivative_series", "generating_checks",
    "GeneratingReport", "action_first_kind", "action_new_lagrangian", "transversality_consistency",
]
