"""Control elimination, state-adjoint vector fields and cross-formulation identification.

Every formulation works on a flat extended state of four ``dim_q`` blocks:

========  ===========================  ==================================
tag       coordinates                  dynamics
========  ===========================  ==================================
pmp       (q, v, lam_q, lam_v)         state/adjoint equations
newlag    (q, k, v_q, v_k)             Euler-Lagrange of the new Lagrangian
newham    (q, k, p_q, p_k)             Hamilton equations of the new Hamiltonian
forced    (q, xi, w_q, w_xi)           Hamilton equations of the forced new Hamiltonian
========  ===========================  ==================================

The forced formulation is integrated in the fiber-derivative image
coordinates, where only second derivatives of L are needed.  ``alpha`` is
an extra tag for the field obtained by transporting the pmp field through
the Tulczyjew map alpha (used in tests: there v_k is not the derivative of k).

Identification between charts always goes through the pmp chart.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .diff_engine import BlockTag, jet_eval, scalar_derivatives
from .errors import ChartError, RegularityError, SingularControlError, UnsupportedFormulationError
from .formulations import forced_control_jet, legendre_velocity, reduced_jet
from .ocp_model import OcpProblem, lagrangian_jet

FORMULATIONS = ("pmp", "newlag", "newham", "forced")
MAX_TOL = 1e-12
MAX_ITER = 50


def _blocks(x, n):
    x = np.asarray(x, float)
    if x.size != 4 * n:
        raise ChartError(f"extended state needs {4 * n} coordinates, got {x.size}")
    return x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:]


def _check_tag(tag: str, allowed=FORMULATIONS):
    if tag not in allowed:
        raise ChartError(f"unknown formulation {tag!r}; expected one of {allowed}")


# -- maximization condition --------------------------------------------------------

def _objective(p: OcpProblem, formulation: str, x):
    """Base point of the control objective: returns ``(g, full)``.

    ``g(u)`` is the scalar objective to maximize; ``full(u, order)`` its jet
    over every input block (q, v, k, u or q, v, u for the forced chart).
    """
    n = p.dim_q
    a, b, c, d = _blocks(x, n)
    if formulation == "pmp":
        q, v, k = a, b, d
    elif formulation in ("newlag", "alpha"):
        q, v, k = a, c, b
    elif formulation == "newham":
        q, v, k = a, d, b
    elif formulation == "forced":
        q, xi = a, b
        v = legendre_velocity(p, q, d)
        fL = p.lagrangian.fL
        return ((lambda u: np.dot(xi, fL(q, v, u)) - p.C(q, v, u)),
                (lambda u, order: forced_control_jet(p, q, v, xi, u, order)))
    else:
        raise ChartError(f"unknown formulation {formulation!r}")
    return ((lambda u: np.dot(k, p.Xv(q, v, u)) - p.C(q, v, u)),
            (lambda u, order: reduced_jet(p, q, v, k, u, order)))


def _negative_definite(H: np.ndarray, scale: float) -> bool | None:
    """True if negative definite, False if some direction curves upward, None if degenerate."""
    if H.shape == (1, 1):
        h = H[0, 0]
        return True if h < -1e-10 * scale else (False if h > 1e-10 * scale else None)
    eig = np.linalg.eigvalsh(H)
    if np.all(eig < -1e-10 * scale):
        return True
    if np.any(eig > 1e-10 * scale):
        return False
    return None


@dataclass(frozen=True)
class _UJet:
    grad: np.ndarray
    hess: np.ndarray


def _maximize(g: Callable, m: int, u0, tol: float, maxiter: int) -> np.ndarray:
    """Damped Newton on the u-gradient of ``g`` with the local-maximum tie-break."""
    blocks = [BlockTag("u", m)]

    def jet(u):
        if m == 1:
            _, d1, d2 = scalar_derivatives(g, u[0])
            return _UJet(np.array([d1]), np.array([[d2]]))
        J = jet_eval(g, blocks, u, order=2)
        return _UJet(J.grad, J.hess)

    u = np.zeros(m) if u0 is None else np.array(u0, float).reshape(m)
    J = jet(u)
    rn = float(np.max(np.abs(J.grad)))
    for _ in range(maxiter):
        if rn <= tol:
            break
        try:
            step = np.linalg.solve(J.hess, J.grad)
        except np.linalg.LinAlgError:
            raise SingularControlError("control Hessian singular away from a stationary point") from None
        t = 1.0
        while True:
            trial = jet(u - t * step)
            tn = float(np.max(np.abs(trial.grad)))
            if tn < rn or t < 1e-6:
                break
            t *= 0.5
        u = u - t * step
        J, rn = trial, tn
    if rn > tol:
        raise SingularControlError("maximization condition: Newton did not converge")
    H = J.hess
    scale = max(1.0, float(np.max(np.abs(H))))
    verdict = _negative_definite(H, scale)
    if verdict is True:
        return u
    if verdict is False:
        raise SingularControlError("stationary control is not a local maximizer")
    # degenerate Hessian: accept only if the stationarity equation still pins u down
    probe = max(np.abs(jet(u + 1e-3 * e).grad - J.grad).max() for e in np.eye(m))
    if probe <= 1e-12:
        raise SingularControlError("maximization condition does not depend on the control")
    return u


def max_condition_scale(p: OcpProblem, formulation: str, x) -> float:
    n = p.dim_q
    _, b, _, d = _blocks(x, n)
    k = d if formulation == "pmp" else b
    return max(1.0, float(np.max(np.abs(k))))


def _solve(p, formulation, x, u0, tol=MAX_TOL, maxiter=MAX_ITER, order=None):
    """Maximizer plus (optionally) the full jet of the objective there."""
    g, full = _objective(p, formulation, x)
    tol = tol * max_condition_scale(p, formulation, x)
    u = _maximize(g, p.dim_u, u0, tol, maxiter)
    return u, (None if order is None else full(u, order))


def solve_max_condition(p: OcpProblem, formulation: str, x, u0=None,
                        tol: float = MAX_TOL, maxiter: int = MAX_ITER) -> np.ndarray:
    """Control maximizing the (chart-transported) Pontryagin Hamiltonian at ``x``.

    The stationarity residual is driven below ``tol * max(1, |adjoint|)``.
    """
    return _solve(p, formulation, x, u0, tol, maxiter)[0]


# -- fields --------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldValue:
    dx: np.ndarray
    u: np.ndarray
    du: np.ndarray | None = None  # time derivative of the control (newlag only)


def field_with_control(p: OcpProblem, formulation: str, x, u0=None) -> FieldValue:
    n = p.dim_q
    a, b, c, d = _blocks(x, n)
    if formulation == "forced":
        return _forced_field(p, a, b, c, d, u0)
    u, J = _solve(p, formulation, x, u0, order=2 if formulation == "newlag" else 1)
    if formulation == "pmp":
        q, v, lq, lv = a, b, c, d
        return FieldValue(np.concatenate([v, J.d("k"), -J.d("q"), -J.d("v") - lq]), u)
    if formulation == "newham":
        q, k, pq, pk = a, b, c, d
        return FieldValue(np.concatenate([pk, pq - J.d("v"), J.d("q"), J.d("k")]), u)
    if formulation == "alpha":
        q, k, vq, vk = a, b, c, d
        return FieldValue(np.concatenate([vq, -J.d("v") - vk, J.d("k"), -J.d("q")]), u)
    if formulation == "newlag":
        q, k, vq, vk = a, b, c, d
        acc = J.d("k")
        Fuu = J.dd("u", "u")
        rhs = J.dd("u", "q") @ vq + J.dd("u", "k") @ vk + J.dd("u", "v") @ acc
        try:
            du = -np.linalg.solve(Fuu, rhs)
        except np.linalg.LinAlgError:
            raise RegularityError("control Hessian singular; control derivative undefined") from None
        vk_dot = (J.d("q") - J.dd("v", "q") @ vq - J.dd("v", "k") @ vk
                  - J.dd("v", "v") @ acc - J.dd("v", "u") @ du)
        return FieldValue(np.concatenate([vq, vk, acc, vk_dot]), u, du)
    raise ChartError(f"unknown formulation {formulation!r}")


def _forced_field(p: OcpProblem, q, xi, wq, wxi, u0) -> FieldValue:
    v = legendre_velocity(p, q, wxi)
    fL = p.lagrangian.fL
    u = _maximize(lambda w: np.dot(xi, fL(q, v, w)) - p.C(q, v, w), p.dim_u, u0,
                  MAX_TOL * max(1.0, float(np.max(np.abs(xi)))), MAX_ITER)
    G = forced_control_jet(p, q, v, xi, u, order=1)
    D1L, _, Lqq, Lqv, Lvv = lagrangian_jet(p.lagrangian, q, v)
    phi_q = -Lqq @ xi - G.d("q")
    phi_w = -Lqv.T @ xi - G.d("v")
    z = np.linalg.solve(Lvv, wq + phi_w)
    force = np.asarray(p.lagrangian.fL(q, v, u), float)
    return FieldValue(np.concatenate([v, z, -phi_q + Lqv @ z, D1L + force]), u)


def field(p: OcpProblem, formulation: str, x, u0=None) -> np.ndarray:
    """Time derivative of the extended state (control eliminated pointwise)."""
    return field_with_control(p, formulation, x, u0).dx


class FieldEvaluator:
    """Field callable with a warm-started control cache (one per trajectory)."""

    def __init__(self, p: OcpProblem, formulation: str, fixed_control=None):
        _check_tag(formulation, FORMULATIONS + ("alpha",))
        self.p = p
        self.formulation = formulation
        self.fixed = None if fixed_control is None else np.atleast_1d(np.asarray(fixed_control, float))
        self.u = None

    def __call__(self, x) -> np.ndarray:
        if self.fixed is not None:
            return fixed_control_field(self.p, self.formulation, x, self.fixed)
        val = field_with_control(self.p, self.formulation, x, self.u)
        self.u = val.u
        return val.dx

    def control(self, x) -> np.ndarray:
        if self.fixed is not None:
            return self.fixed.copy()
        self.u = solve_max_condition(self.p, self.formulation, x, self.u)
        return self.u


def fixed_control_field(p: OcpProblem, formulation: str, x, u) -> np.ndarray:
    """pmp-chart state/adjoint field with a prescribed control (no elimination)."""
    if formulation != "pmp":
        raise ChartError("prescribed-control integration is available in the pmp chart only")
    q, v, lq, lv = _blocks(x, p.dim_q)
    J = reduced_jet(p, q, v, lv, u, order=1)
    return np.concatenate([v, J.d("k"), -J.d("q"), -J.d("v") - lq])


# -- identification ---------------------------------------------------------------------

def to_pmp(p: OcpProblem, formulation: str, x, u0=None) -> np.ndarray:
    n = p.dim_q
    a, b, c, d = _blocks(x, n)
    if formulation == "pmp":
        return np.asarray(x, float).copy()
    if formulation == "newlag":
        q, k, vq, vk = a, b, c, d
        u = solve_max_condition(p, "newlag", x, u0)
        Fv = reduced_jet(p, q, vq, k, u, order=1).d("v")
        return np.concatenate([q, vq, -vk - Fv, k])
    if formulation == "newham":
        q, k, pq, pk = a, b, c, d
        return np.concatenate([q, pk, -pq, k])
    if formulation == "forced":
        q, xi, wq, wxi = a, b, c, d
        v = legendre_velocity(p, q, wxi)
        _, _, _, Lqv, Lvv = lagrangian_jet(p.lagrangian, q, v)
        return np.concatenate([q, v, -wq + Lqv @ xi, Lvv @ xi])
    raise ChartError(f"unknown formulation {formulation!r}")


def from_pmp(p: OcpProblem, formulation: str, x, u0=None) -> np.ndarray:
    n = p.dim_q
    q, v, lq, lv = _blocks(x, n)
    if formulation == "pmp":
        return np.asarray(x, float).copy()
    if formulation == "newlag":
        u = solve_max_condition(p, "pmp", x, u0)
        Fv = reduced_jet(p, q, v, lv, u, order=1).d("v")
        return np.concatenate([q, lv, v, -lq - Fv])
    if formulation == "newham":
        return np.concatenate([q, lv, -lq, v])
    if formulation == "forced":
        if p.lagrangian is None:
            raise UnsupportedFormulationError(f"problem {p.name!r} has no force-controlled Lagrangian")
        _, D2L, _, Lqv, Lvv = lagrangian_jet(p.lagrangian, q, v)
        xi = np.linalg.solve(Lvv, lv)
        return np.concatenate([q, xi, -lq + Lqv @ xi, D2L])
    raise ChartError(f"unknown formulation {formulation!r}")


def identify(x, source: str, target: str, p: OcpProblem, u0=None) -> np.ndarray:
    """Transport an extended state between formulations (trajectories map to trajectories)."""
    _check_tag(source)
    _check_tag(target)
    if source == target:
        return np.asarray(x, float).copy()
    return from_pmp(p, target, to_pmp(p, source, x, u0), u0)


# -- transversality --------------------------------------------------------------------

def _mayer_grad(p: OcpProblem, q, v):
    n = p.dim_q
    if p.mayer is None:
        return np.zeros(n), np.zeros(n)
    J = jet_eval(lambda x: p.mayer.phi(x[:n], x[n:]), [BlockTag("q", n), BlockTag("v", n)],
                 np.concatenate([q, v]), order=1)
    return J.d("q"), J.d("v")


def transversality_residual(p: OcpProblem, xT, formulation: str) -> np.ndarray:
    """Terminal conditions at T: endpoint mismatch (fixed) or ``lam + dphi`` (free)."""
    q, v, lq, lv = _blocks(to_pmp(p, formulation, xT), p.dim_q)
    b = p.boundary
    if b.terminal == "fixed":
        return np.concatenate([q - b.qT, v - b.vT])
    dq, dv = _mayer_grad(p, q, v)
    return np.concatenate([lq + dq, lv + dv])


def transversality_display_residual(p: OcpProblem, xT_newlag) -> np.ndarray:
    """Free-endpoint conditions written directly in the new-Lagrangian chart.

    ``k(T) = -D2 phi`` and ``k'(T) = D1 phi + D2 C + D2 phi . D2 Xv``; reported for
    comparison with :func:`transversality_residual`, not used for shooting.
    """
    n, m = p.dim_q, p.dim_u
    q, k, vq, vk = _blocks(xT_newlag, n)
    u = solve_max_condition(p, "newlag", xT_newlag)
    dq, dv = _mayer_grad(p, q, vq)
    J = jet_eval(lambda x: p.C(x[:n], x[n:2 * n], x[2 * n:]),
                 [BlockTag("q", n), BlockTag("v", n), BlockTag("u", m)], np.concatenate([q, vq, u]), 1)
    JX = jet_eval(lambda x: p.Xv(x[:n], x[n:2 * n], x[2 * n:]),
                  [BlockTag("q", n), BlockTag("v", n), BlockTag("u", m)], np.concatenate([q, vq, u]), 1)
    return np.concatenate([k + dv, vk - (dq + J.d("v") + JX.d("v").T @ dv)])
