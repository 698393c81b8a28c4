"""Fixed-step RK4 integration of the extended-state fields and single shooting.

The shooting unknowns are always the ``2 * dim_q`` initial adjoint
coordinates of the chosen chart:

* pmp    -> (lam_q, lam_v)
* newlag -> (k, v_k)
* newham -> (k, p_q)
* forced -> (xi, w_q)   (w_xi is pinned to D2 L(q0, v0))
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .errors import ChartError, SocpError, UnsupportedFormulationError
from .formulations import legendre_velocity
from .ocp_model import OcpProblem, lagrangian_jet
from .optimality import FORMULATIONS, FieldEvaluator, transversality_residual

MAX_SHOOT_ITER = 50
JAC_STEP = 1e-6
DEFAULT_N = 200


@dataclass
class Trajectory:
    """Node values of an integrated extended state (uniform grid)."""

    t: np.ndarray
    states: np.ndarray  # (N+1, 4 dim_q)
    controls: np.ndarray  # (N+1, dim_u)
    formulation: str
    dim_q: int
    monitors: dict[str, np.ndarray] = field(default_factory=dict)
    complete: bool = True

    @property
    def N(self) -> int:
        return len(self.t) - 1

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    def block(self, i: int) -> np.ndarray:
        n = self.dim_q
        return self.states[:, i * n:(i + 1) * n]

    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class SolverReport:
    converged: bool
    iterations: int
    residual: float
    trajectory: Trajectory | None
    unknowns: np.ndarray
    drifts: dict[str, float] = field(default_factory=dict)
    message: str = ""


# -- integration ------------------------------------------------------------------

def integrate_ivp(p: OcpProblem, formulation: str, x0, N: int = DEFAULT_N, T: float | None = None,
                  t0: float = 0.0, fixed_control=None) -> Trajectory:
    """Classical RK4 with step ``T / N``; controls recorded at the nodes.

    A failure inside the field (domain violation, singular control) stops
    the integration and returns the partial trajectory with ``complete=False``.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    T = p.boundary.T if T is None else float(T)
    h = T / N
    f = FieldEvaluator(p, formulation, fixed_control=fixed_control)
    x = np.asarray(x0, float).copy()
    t = t0 + h * np.arange(N + 1)
    states = np.full((N + 1, x.size), np.nan)
    controls = np.full((N + 1, p.dim_u), np.nan)
    states[0] = x
    complete = True
    try:
        for i in range(N):
            k1 = f(x)
            u_node = f.u
            controls[i] = f.fixed if f.fixed is not None else u_node
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise FloatingPointError("non-finite state")
            f.u = u_node
            states[i + 1] = x
        controls[N] = f.control(x)
    except (SocpError, FloatingPointError, np.linalg.LinAlgError):
        complete = False
    return Trajectory(t, states, controls, formulation, p.dim_q, complete=complete)


# -- shooting -----------------------------------------------------------------------

def initial_state(p: OcpProblem, formulation: str, z) -> np.ndarray:
    """Full initial extended state from the ``2 * dim_q`` shooting unknowns."""
    n = p.dim_q
    z = np.asarray(z, float)
    if z.size != 2 * n:
        raise ChartError(f"shooting needs {2 * n} unknowns, got {z.size}")
    q0, v0 = p.boundary.q0, p.boundary.v0
    a, b = z[:n], z[n:]
    if formulation == "pmp":
        return np.concatenate([q0, v0, a, b])
    if formulation == "newlag":
        return np.concatenate([q0, a, v0, b])
    if formulation == "newham":
        return np.concatenate([q0, a, b, v0])
    if formulation == "forced":
        if p.lagrangian is None:
            raise UnsupportedFormulationError(f"problem {p.name!r} has no force-controlled Lagrangian")
        D2L = lagrangian_jet(p.lagrangian, q0, v0)[1]
        return np.concatenate([q0, a, b, D2L])
    raise ChartError(f"unknown formulation {formulation!r}")


def unknowns_of(p: OcpProblem, formulation: str, x0) -> np.ndarray:
    """Inverse of :func:`initial_state`: pick the shooting unknowns out of a full state."""
    n = p.dim_q
    x0 = np.asarray(x0, float)
    if formulation == "pmp":
        return x0[2 * n:].copy()
    if formulation == "newlag":
        return np.concatenate([x0[n:2 * n], x0[3 * n:]])
    if formulation in ("newham", "forced"):
        return x0[n:3 * n].copy()
    raise ChartError(f"unknown formulation {formulation!r}")


def shoot(p: OcpProblem, formulation: str, z, N: int = DEFAULT_N) -> np.ndarray:
    """Terminal residual (transversality or endpoint mismatch) for initial unknowns ``z``."""
    traj = integrate_ivp(p, formulation, initial_state(p, formulation, z), N)
    if not traj.complete:
        return np.full(2 * p.dim_q, np.inf)
    return transversality_residual(p, traj.final(), formulation)


@dataclass
class NewtonResult:
    z: np.ndarray
    residual: np.ndarray
    iterations: int
    converged: bool


def newton_solve(fun: Callable[[np.ndarray], np.ndarray], z0, tol: float = 1e-8,
                 maxiter: int = MAX_SHOOT_ITER, step: float = JAC_STEP) -> NewtonResult:
    """Damped Newton on ``fun(z) = 0`` with a central-difference Jacobian.

    The FD step is ``step * (1 + |z|)``.  Returns the best iterate seen.
    """
    z = np.asarray(z0, float).copy()
    r = np.asarray(fun(z), float)
    best = (np.inf, z, r)
    for it in range(maxiter + 1):
        rn = float(np.max(np.abs(r)))
        if rn < best[0]:
            best = (rn, z.copy(), r.copy())
        if rn <= tol:
            return NewtonResult(z, r, it, True)
        if it == maxiter or not np.isfinite(rn):
            break
        hstep = step * (1.0 + np.linalg.norm(z))
        J = np.empty((r.size, z.size))
        for j in range(z.size):
            e = np.zeros_like(z)
            e[j] = hstep
            J[:, j] = (np.asarray(fun(z + e)) - np.asarray(fun(z - e))) / (2 * hstep)
        try:
            dz = np.linalg.lstsq(J, -r, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        t = 1.0
        while True:
            z_new = z + t * dz
            r_new = np.asarray(fun(z_new), float)
            if float(np.max(np.abs(r_new))) < rn or t < 1e-4:
                break
            t *= 0.5
        z, r = z_new, r_new
    rn, z, r = best
    return NewtonResult(z, r, maxiter, rn <= tol)


def default_guess(p: OcpProblem, formulation: str) -> np.ndarray:
    return np.zeros(2 * p.dim_q)


def solve_bvp(p: OcpProblem, formulation: str = "pmp", guess=None, N: int = DEFAULT_N,
              tol: float = 1e-8, maxiter: int = MAX_SHOOT_ITER, coarse_grid: int | None = None) -> SolverReport:
    """Single shooting from ``guess`` (zeros by default).

    ``coarse_grid`` first solves on that many steps and starts the fine
    Newton from the coarse unknowns; the reported iteration count is the
    sum of both.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if formulation not in FORMULATIONS:
        raise ChartError(f"unknown formulation {formulation!r}")
    if formulation == "forced" and p.lagrangian is None:
        raise UnsupportedFormulationError(f"problem {p.name!r} has no force-controlled Lagrangian")
    z0 = default_guess(p, formulation) if guess is None else np.asarray(guess, float)
    coarse_iterations = 0
    if coarse_grid is not None and coarse_grid < N:
        pre = solve_bvp(p, formulation, z0, coarse_grid, max(tol, 1e-6), maxiter)
        coarse_iterations = pre.iterations
        if pre.converged:
            z0 = pre.unknowns
    cache: dict[bytes, Trajectory] = {}

    def residual(z):
        traj = integrate_ivp(p, formulation, initial_state(p, formulation, z), N)
        cache.clear()
        cache[z.tobytes()] = traj
        if not traj.complete:
            return np.full(2 * p.dim_q, np.inf)
        return transversality_residual(p, traj.final(), formulation)

    res = newton_solve(residual, z0, tol=tol, maxiter=maxiter)
    traj = cache.get(res.z.tobytes())
    if traj is None:
        traj = integrate_ivp(p, formulation, initial_state(p, formulation, res.z), N)
    rn = float(np.max(np.abs(res.residual)))
    msg = "converged" if res.converged else f"shooting did not converge (residual {rn:.3g})"
    return SolverReport(res.converged, res.iterations + coarse_iterations, rn, traj, res.z, message=msg)


# -- costs on a solved trace --------------------------------------------------------------

def _node_eval(fn, traj: Trajectory) -> np.ndarray:
    return np.array([fn(x, u) for x, u in zip(traj.states, traj.controls)])


def _cost_nodes(p: OcpProblem, q, v, u) -> np.ndarray:
    return np.array([float(p.C(a, b, c)) for a, b, c in zip(q, v, u)])


def _node_derivatives(p: OcpProblem, traj: Trajectory) -> np.ndarray:
    f = FieldEvaluator(p, traj.formulation)
    out = []
    for x, u in zip(traj.states, traj.controls):
        f.u = u
        out.append(f(x))
    return np.array(out)


def cost_pmp(p: OcpProblem, traj: Trajectory) -> float:
    """First-order augmented cost: ``phi + int [C + lam . (x' - X)]`` by Simpson."""
    if traj.formulation != "pmp":
        raise ChartError("cost_pmp needs a pmp trace")
    n = p.dim_q
    q, v, lq, lv = (traj.block(i) for i in range(4))
    dx = _node_derivatives(p, traj)
    acc = np.array([np.asarray(p.Xv(a, b, c), float) for a, b, c in zip(q, v, traj.controls)])
    integrand = (_cost_nodes(p, q, v, traj.controls) + np.sum(lq * (dx[:, :n] - v), axis=1)
                 + np.sum(lv * (dx[:, n:2 * n] - acc), axis=1))
    return float(p.phi(q[-1], v[-1])) + float(simpson(integrand, x=traj.t))


def cost_newlag_second_order(p: OcpProblem, traj: Trajectory) -> float:
    """``phi + int [C + k . (q'' - Xv)]`` with ``q''`` from the field."""
    if traj.formulation != "newlag":
        raise ChartError("cost_newlag_second_order needs a newlag trace")
    n = p.dim_q
    q, k, vq, _ = (traj.block(i) for i in range(4))
    dx = _node_derivatives(p, traj)
    acc = np.array([np.asarray(p.Xv(a, b, c), float) for a, b, c in zip(q, vq, traj.controls)])
    integrand = _cost_nodes(p, q, vq, traj.controls) + np.sum(k * (dx[:, 2 * n:3 * n] - acc), axis=1)
    return float(p.phi(q[-1], vq[-1])) + float(simpson(integrand, x=traj.t))


def cost_newlag(p: OcpProblem, traj: Trajectory) -> float:
    """Integrated-by-parts cost: ``phi + [k . v]_0^T + int [C - k' . v - k . Xv]``."""
    if traj.formulation != "newlag":
        raise ChartError("cost_newlag needs a newlag trace")
    q, k, vq, vk = (traj.block(i) for i in range(4))
    acc = np.array([np.asarray(p.Xv(a, b, c), float) for a, b, c in zip(q, vq, traj.controls)])
    integrand = _cost_nodes(p, q, vq, traj.controls) - np.sum(vk * vq, axis=1) - np.sum(k * acc, axis=1)
    boundary = float(k[-1] @ vq[-1] - k[0] @ vq[0])
    return float(p.phi(q[-1], vq[-1])) + boundary + float(simpson(integrand, x=traj.t))


def cost_forced(p: OcpProblem, traj: Trajectory) -> float:
    """``phi + [D2L . xi]_0^T + int [C - D2L . xi' - (D1L + fL) . xi]`` on a forced trace."""
    if traj.formulation != "forced":
        raise ChartError("cost_forced needs a forced trace")
    q, xi, _, wxi = (traj.block(i) for i in range(4))
    dx = _node_derivatives(p, traj)
    n = p.dim_q
    vals = []
    vs = []
    for i in range(len(traj.t)):
        v = legendre_velocity(p, q[i], wxi[i])
        vs.append(v)
        D1L, D2L, *_ = lagrangian_jet(p.lagrangian, q[i], v)
        fL = np.asarray(p.lagrangian.fL(q[i], v, traj.controls[i]), float)
        vals.append(float(p.C(q[i], v, traj.controls[i])) - D2L @ dx[i, n:2 * n] - (D1L + fL) @ xi[i])
    boundary = float(wxi[-1] @ xi[-1] - wxi[0] @ xi[0])
    return float(p.phi(q[-1], vs[-1])) + boundary + float(simpson(np.array(vals), x=traj.t))


def running_cost(p: OcpProblem, traj: Trajectory, velocity: np.ndarray | None = None) -> float:
    """Plain objective ``phi + int C`` with the state velocity taken from the trace."""
    q = traj.block(0)
    if velocity is None:
        velocity = pmp_velocity(p, traj)
    c = _cost_nodes(p, q, velocity, traj.controls)
    return float(p.phi(q[-1], velocity[-1])) + float(simpson(c, x=traj.t))


def pmp_velocity(p: OcpProblem, traj: Trajectory) -> np.ndarray:
    """State velocity per node for any chart."""
    if traj.formulation == "pmp":
        return traj.block(1)
    if traj.formulation == "newlag":
        return traj.block(2)
    if traj.formulation == "newham":
        return traj.block(3)
    return np.array([legendre_velocity(p, a, b) for a, b in zip(traj.block(0), traj.block(3))])


def augmented_cost(p: OcpProblem, traj: Trajectory) -> float:
    """The chart's own augmented cost (newham falls back to the plain objective)."""
    return {"pmp": cost_pmp, "newlag": cost_newlag, "forced": cost_forced}.get(
        traj.formulation, running_cost)(p, traj)


# -- CSV ---------------------------------------------------------------------------------

def trace_header(p: OcpProblem, monitors) -> list[str]:
    n, m = p.dim_q, p.dim_u
    cols = ["t"]
    for name in ("q", "v", "adj1", "adj2"):
        cols += [f"{name}_{i}" for i in range(n)]
    cols += [f"u_{j}" for j in range(m)]
    return cols + list(monitors)


def write_trace_csv(path, p: OcpProblem, traj: Trajectory, monitors: dict[str, np.ndarray]) -> None:
    """One row per node: t, q, v, chart adjoints, u, then monitor columns (17 significant digits)."""
    q = traj.block(0)
    v = pmp_velocity(p, traj)
    if traj.formulation == "pmp":
        adj1, adj2 = traj.block(2), traj.block(3)
    elif traj.formulation == "newlag":
        adj1, adj2 = traj.block(1), traj.block(3)
    else:
        adj1, adj2 = traj.block(1), traj.block(2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(p, monitors))
        for i in range(len(traj.t)):
            row = [traj.t[i], *q[i], *v[i], *adj1[i], *adj2[i], *traj.controls[i]]
            row += [monitors[k][i] for k in monitors]
            w.writerow(["%.17g" % x for x in row])
