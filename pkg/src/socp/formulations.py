"""Scalar functions of the four equivalent formulations of an optimal control problem.

Notation used throughout: for a problem with acceleration ``Xv`` and
running cost ``C`` the *reduced function*

    F(q, v, k, u) = k . Xv(q, v, u) - C(q, v, u)

collects every control-dependent part of the Pontryagin Hamiltonian
(with the cost multiplier fixed to -1).  The new control Lagrangian is
``vk . vq + F(q, vq, k, u)`` and the new control Hamiltonian is
``pq . pk - F(q, pk, k, u)``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .diff_engine import BlockTag, Jet2, jet_eval
from .errors import (DimensionError, LegendreInversionError, NotInvertibleError,
                     UnsupportedFormulationError)
from .ocp_model import OcpProblem, check_mass, lagrangian_jet, numerical_rank, sample_points

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50


# -- points ----------------------------------------------------------------------

class _Point:
    """Mixin: flat-array conversion in field order (four dim_q blocks, then u)."""

    def array(self) -> np.ndarray:
        return np.concatenate([np.atleast_1d(np.asarray(getattr(self, f.name), float)) for f in fields(self)])

    @classmethod
    def from_array(cls, x, dim_q: int, dim_u: int = 0):
        x = np.asarray(x, float)
        n = dim_q
        if x.size not in (4 * n, 4 * n + dim_u):
            raise DimensionError(f"{cls.__name__} needs {4 * n + dim_u} coordinates, got {x.size}")
        u = x[4 * n:] if x.size > 4 * n else np.zeros(dim_u)
        return cls(x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:4 * n], u)


@dataclass(frozen=True)
class PmpPoint(_Point):
    q: np.ndarray
    v: np.ndarray
    lq: np.ndarray
    lv: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class NewLagPoint(_Point):
    q: np.ndarray
    k: np.ndarray
    vq: np.ndarray
    vk: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class NewHamPoint(_Point):
    q: np.ndarray
    k: np.ndarray
    pq: np.ndarray
    pk: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class ForcedPoint(_Point):
    q: np.ndarray
    xi: np.ndarray
    vq: np.ndarray
    vxi: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class ForcedImagePoint(_Point):
    """Fiber-derivative image of a forced point: (q, xi, wq, wxi, u)."""

    q: np.ndarray
    xi: np.ndarray
    wq: np.ndarray
    wxi: np.ndarray
    u: np.ndarray


# -- jets of the building blocks --------------------------------------------------

def reduced_jet(p: OcpProblem, q, v, k, u, order: int = 2) -> Jet2:
    """Jet of ``F(q, v, k, u) = k . Xv - C`` over blocks q, v, k, u."""
    n, m = p.dim_q, p.dim_u

    def F(x):
        q_, v_, k_, u_ = x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:]
        return np.dot(k_, p.Xv(q_, v_, u_)) - p.C(q_, v_, u_)

    blocks = [BlockTag("q", n), BlockTag("v", n), BlockTag("k", n), BlockTag("u", m)]
    return jet_eval(F, blocks, np.concatenate([q, v, k, u]), order)


def _require_lagrangian(p: OcpProblem):
    if p.lagrangian is None:
        raise UnsupportedFormulationError(f"problem {p.name!r} has no force-controlled Lagrangian")
    return p.lagrangian


def forced_control_jet(p: OcpProblem, q, v, xi, u, order: int = 2) -> Jet2:
    """Jet of ``G(q, v, u) = xi . fL(q, v, u) - C(q, v, u)`` over blocks q, v, u."""
    lag = _require_lagrangian(p)
    n, m = p.dim_q, p.dim_u

    def G(x):
        q_, v_, u_ = x[:n], x[n:2 * n], x[2 * n:]
        return np.dot(xi, lag.fL(q_, v_, u_)) - p.C(q_, v_, u_)

    return jet_eval(G, [BlockTag("q", n), BlockTag("v", n), BlockTag("u", m)],
                    np.concatenate([q, v, u]), order)


# -- Pontryagin and the SODE-based new Lagrangian/Hamiltonian ----------------------

def pontryagin_h(p: OcpProblem, pt: PmpPoint) -> float:
    """Control Hamiltonian with cost multiplier -1: ``lq.v + lv.Xv - C``."""
    return float(np.dot(pt.lq, pt.v) + np.dot(pt.lv, p.Xv(pt.q, pt.v, pt.u)) - p.C(pt.q, pt.v, pt.u))


def new_lagrangian(p: OcpProblem, pt: NewLagPoint) -> float:
    """``vk.vq + k.Xv(q, vq, u) - C(q, vq, u)``."""
    return float(np.dot(pt.vk, pt.vq) + np.dot(pt.k, p.Xv(pt.q, pt.vq, pt.u)) - p.C(pt.q, pt.vq, pt.u))


def _newlag_jet(p: OcpProblem, pt: NewLagPoint, order: int) -> Jet2:
    n, m = p.dim_q, p.dim_u

    def Lt(x):
        q, k, vq, vk, u = x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:4 * n], x[4 * n:]
        return np.dot(vk, vq) + np.dot(k, p.Xv(q, vq, u)) - p.C(q, vq, u)

    blocks = [BlockTag("q", n), BlockTag("k", n), BlockTag("vq", n), BlockTag("vk", n), BlockTag("u", m)]
    return jet_eval(Lt, blocks, pt.array(), order)


def new_energy(p: OcpProblem, pt: NewLagPoint) -> float:
    """``D3 L . vq + D4 L . vk - L`` for the new control Lagrangian."""
    J = _newlag_jet(p, pt, 1)
    return float(J.d("vq") @ pt.vq + J.d("vk") @ pt.vk - J.value)


def fiber_derivative_newlag(p: OcpProblem, pt: NewLagPoint) -> NewHamPoint:
    """Legendre map: ``pq = vk + D2Xv^T k - D2C``, ``pk = vq``."""
    J = _newlag_jet(p, pt, 1)
    return NewHamPoint(pt.q.copy(), pt.k.copy(), J.d("vq").copy(), J.d("vk").copy(), pt.u.copy())


def fiber_derivative_newlag_inverse(p: OcpProblem, pt: NewHamPoint) -> NewLagPoint:
    F = reduced_jet(p, pt.q, pt.pk, pt.k, pt.u, order=1)
    return NewLagPoint(pt.q.copy(), pt.k.copy(), pt.pk.copy(), pt.pq - F.d("v"), pt.u.copy())


def new_hamiltonian(p: OcpProblem, pt: NewHamPoint) -> float:
    """``pq.pk - k.Xv(q, pk, u) + C(q, pk, u)``."""
    return float(np.dot(pt.pq, pt.pk) - np.dot(pt.k, p.Xv(pt.q, pt.pk, pt.u)) + p.C(pt.q, pt.pk, pt.u))


@dataclass(frozen=True)
class HyperregularityReport:
    dets: np.ndarray
    abs_is_one: bool
    point_independent: bool
    sign: int
    claimed_sign: int

    @property
    def sign_matches_claim(self) -> bool:
        return self.sign == self.claimed_sign


def velocity_hessian_newlag(p: OcpProblem, pt: NewLagPoint) -> np.ndarray:
    """Hessian of the new control Lagrangian w.r.t. (vq, vk)."""
    J = _newlag_jet(p, pt, 2)
    return np.block([[J.dd("vq", "vq"), J.dd("vq", "vk")], [J.dd("vk", "vq"), J.dd("vk", "vk")]])


def hyperregularity_certificate(p: OcpProblem, samples) -> HyperregularityReport:
    """Determinant of the blocked velocity Hessian ``[[D33 L, I], [I, 0]]`` at each sample.

    ``claimed_sign`` is ``(-1)^(dim_q - 1)``, the value usually quoted for
    this determinant; the computed sign is recorded next to it.
    """
    dets = np.array([np.linalg.det(velocity_hessian_newlag(p, s)) for s in samples])
    rounded = np.round(dets, 12)
    sign = int(np.sign(dets[0])) if dets.size else 0
    return HyperregularityReport(
        dets=dets,
        abs_is_one=bool(np.all(np.abs(np.abs(dets) - 1.0) <= 1e-12)),
        point_independent=bool(np.all(rounded == rounded[0])),
        sign=sign,
        claimed_sign=(-1) ** (p.dim_q - 1),
    )


# -- force-controlled Lagrangian variants -------------------------------------------

def legendre_velocity(p: OcpProblem, q, w, tol: float = NEWTON_TOL, maxiter: int = NEWTON_MAXITER) -> np.ndarray:
    """Solve ``D2L(q, v) = w`` for v by damped Newton from v = 0."""
    lag = _require_lagrangian(p)
    q = np.asarray(q, float)
    w = np.asarray(w, float)
    v = np.zeros(p.dim_q)
    for _ in range(maxiter + 1):
        _, D2L, _, _, Lvv = lagrangian_jet(lag, q, v)
        r = D2L - w
        if np.max(np.abs(r)) <= tol * max(1.0, np.max(np.abs(w))):
            return v
        check_mass(Lvv)
        step = np.linalg.solve(Lvv, r)
        t = 1.0
        rn = np.max(np.abs(r))
        while t > 1e-4:
            trial = v - t * step
            try:
                if np.max(np.abs(lagrangian_jet(lag, q, trial)[1] - w)) < rn:
                    break
            except Exception:  # noqa: BLE001 - leave the domain, shrink the step
                pass
            t *= 0.5
        v = v - t * step
    raise LegendreInversionError(f"Legendre inversion did not converge at q={q}")


def forced_new_lagrangian(p: OcpProblem, pt: ForcedPoint) -> float:
    """``D2L . vxi + (D1L + fL) . xi - C`` evaluated at (q, vq)."""
    lag = _require_lagrangian(p)
    n = p.dim_q
    J = jet_eval(lambda x: lag.L(x[:n], x[n:]), [BlockTag("q", n), BlockTag("v", n)],
                 np.concatenate([pt.q, pt.vq]), order=1)
    force = np.asarray(lag.fL(pt.q, pt.vq, pt.u), float)
    return float(J.d("v") @ pt.vxi + (J.d("q") + force) @ pt.xi - p.C(pt.q, pt.vq, pt.u))


def forced_fiber_derivative(p: OcpProblem, pt: ForcedPoint) -> ForcedImagePoint:
    """``wq = D22L vxi + (D12L + D2fL)^T xi - D2C`` and ``wxi = D2L``."""
    lag = _require_lagrangian(p)
    _, D2L, _, Lqv, Lvv = lagrangian_jet(lag, pt.q, pt.vq)
    G = forced_control_jet(p, pt.q, pt.vq, pt.xi, pt.u, order=1)
    wq = Lvv @ pt.vxi + Lqv.T @ pt.xi + G.d("v")
    return ForcedImagePoint(pt.q.copy(), pt.xi.copy(), wq, D2L.copy(), pt.u.copy())


def forced_fiber_derivative_inverse(p: OcpProblem, img: ForcedImagePoint) -> ForcedPoint:
    lag = _require_lagrangian(p)
    vq = legendre_velocity(p, img.q, img.wxi)
    _, _, _, Lqv, Lvv = lagrangian_jet(lag, img.q, vq)
    G = forced_control_jet(p, img.q, vq, img.xi, img.u, order=1)
    vxi = np.linalg.solve(Lvv, img.wq - Lqv.T @ img.xi - G.d("v"))
    return ForcedPoint(img.q.copy(), img.xi.copy(), vq, vxi, img.u.copy())


def forced_new_hamiltonian(p: OcpProblem, img: ForcedImagePoint) -> float:
    """``wq . v - (D1L + fL) . xi + C`` with v recovered from ``D2L(q, v) = wxi``."""
    lag = _require_lagrangian(p)
    v = legendre_velocity(p, img.q, img.wxi)
    D1L = lagrangian_jet(lag, img.q, v)[0]
    force = np.asarray(lag.fL(img.q, v, img.u), float)
    return float(img.wq @ v - (D1L + force) @ img.xi + p.C(img.q, v, img.u))


@dataclass(frozen=True)
class ForcedHamiltonianSystem:
    """Forced Hamiltonian system obtained through the Legendre map ``p = D2L(q, v)``."""

    problem: OcpProblem

    def velocity(self, q, pm) -> np.ndarray:
        return legendre_velocity(self.problem, q, pm)

    def H(self, q, pm) -> float:
        v = self.velocity(q, pm)
        return float(np.dot(pm, v) - self.problem.lagrangian.L(q, v))

    def dH_dq(self, q, pm) -> np.ndarray:
        return -lagrangian_jet(self.problem.lagrangian, q, self.velocity(q, pm))[0]

    def f_H(self, q, pm, u) -> np.ndarray:
        return np.asarray(self.problem.lagrangian.fL(q, self.velocity(q, pm), u), float)

    def C_H(self, q, pm, u) -> float:
        return float(self.problem.C(q, self.velocity(q, pm), u))

    def field(self, q, pm, u) -> np.ndarray:
        """Forced Hamilton equations ``(D2H, -D1H + f_H)``."""
        return np.concatenate([self.velocity(q, pm), -self.dH_dq(q, pm) + self.f_H(q, pm, u)])

    def pontryagin_h(self, q, pm, lq, lp, u) -> float:
        """``lq . D2H + lp . (-D1H + f_H) - C_H``."""
        v = self.velocity(q, pm)
        lag = self.problem.lagrangian
        D1L = lagrangian_jet(lag, np.asarray(q, float), v)[0]
        force = np.asarray(lag.fL(q, v, u), float)
        return float(np.dot(lq, v) + np.dot(lp, D1L + force) - self.problem.C(q, v, u))


def build_forced_hamiltonian(p: OcpProblem) -> ForcedHamiltonianSystem:
    _require_lagrangian(p)
    return ForcedHamiltonianSystem(p)


# -- higher-order Lagrangian ------------------------------------------------------------

def _solve_actuated(p: OcpProblem, q, v, a, rows=None, tol=NEWTON_TOL, maxiter=NEWTON_MAXITER):
    """Solve ``Xv[rows](q, v, u) = a[rows]`` for u by damped Newton from u = 0."""
    n, m = p.dim_q, p.dim_u
    rows = np.arange(n) if rows is None else np.asarray(rows)
    if rows.size != m:
        raise NotInvertibleError(f"{rows.size} acceleration equations for {m} controls")
    q, v, a = (np.asarray(x, float) for x in (q, v, a))
    u = np.zeros(m)

    def jac(u):
        J = jet_eval(lambda x: p.Xv(q, v, x)[rows], [BlockTag("u", m)], u, order=1)
        return np.asarray(J.value), J.grad

    for _ in range(maxiter + 1):
        val, D = jac(u)
        r = val - a[rows]
        if np.max(np.abs(r)) <= tol * max(1.0, np.max(np.abs(a[rows]))):
            return u, D
        if numerical_rank(D) < m:
            raise NotInvertibleError("control Jacobian of the acceleration is singular")
        step = np.linalg.solve(D, r)
        t, rn = 1.0, np.max(np.abs(r))
        while t > 1e-4 and np.max(np.abs(jac(u - t * step)[0] - a[rows])) >= rn:
            t *= 0.5
        u = u - t * step
    raise NotInvertibleError("Newton inversion of the acceleration did not converge")


def _cost_u_grad(p: OcpProblem, q, v, u) -> np.ndarray:
    m = p.dim_u
    return jet_eval(lambda x: p.C(q, v, x), [BlockTag("u", m)], u, order=1).grad


def higher_order_lagrangian(p: OcpProblem, q, v, a) -> float:
    """``C(q, v, u(q, v, a))`` for a fully actuated problem."""
    if p.dim_u != p.dim_q:
        raise NotInvertibleError(f"underactuated problem ({p.dim_u} controls for {p.dim_q} dofs)")
    u, _ = _solve_actuated(p, q, v, a)
    return float(p.C(np.asarray(q, float), np.asarray(v, float), u))


def higher_order_lagrangian_d3(p: OcpProblem, q, v, a) -> np.ndarray:
    """Derivative of the higher-order Lagrangian w.r.t. the acceleration."""
    if p.dim_u != p.dim_q:
        raise NotInvertibleError(f"underactuated problem ({p.dim_u} controls for {p.dim_q} dofs)")
    u, D = _solve_actuated(p, q, v, a)
    return np.linalg.solve(D.T, _cost_u_grad(p, np.asarray(q, float), np.asarray(v, float), u))


def actuation_split(p: OcpProblem, q, v, u=None) -> tuple[np.ndarray, np.ndarray]:
    """Indices of directly actuated and unactuated acceleration equations."""
    n, m = p.dim_q, p.dim_u
    u = np.zeros(m) if u is None else np.asarray(u, float)
    J = jet_eval(lambda x: p.Xv(np.asarray(q, float), np.asarray(v, float), x), [BlockTag("u", m)], u, order=1).grad
    norms = np.linalg.norm(J, axis=1)
    scale = max(float(norms.max()), 1.0)
    act = np.flatnonzero(norms > 1e-12 * scale)
    if act.size != m or numerical_rank(J[act]) < m:
        raise UnsupportedFormulationError("no coordinate split into actuated and unactuated equations")
    return act, np.setdiff1d(np.arange(n), act)


def augmented_higher_order_lagrangian(p: OcpProblem, q, v, a, mult) -> float:
    """``C(q, v, u) + mult . (a_unact - Xv_unact(q, v))`` with u solved from the actuated rows."""
    act, unact = actuation_split(p, q, v)
    mult = np.atleast_1d(np.asarray(mult, float))
    if mult.size != unact.size:
        raise DimensionError(f"need {unact.size} multipliers, got {mult.size}")
    q, v, a = (np.asarray(x, float) for x in (q, v, a))
    u, _ = _solve_actuated(p, q, v, a, rows=act)
    value = float(p.C(q, v, u))
    if unact.size:
        value += float(mult @ (a[unact] - np.asarray(p.Xv(q, v, u), float)[unact]))
    return value


# -- regularity classification ----------------------------------------------------------

@dataclass(frozen=True)
class RegularityReport:
    verdict: str
    n_samples: int
    n_full_rank: int
    n_cost_full_rank: int
    u_dependent: bool


def classify_ocp_regularity(p: OcpProblem, samples=None, n: int = 100, seed: int = 42,
                            hyperregular_flag: bool | None = None) -> RegularityReport:
    """Sample-based regularity class of the maximization condition.

    ``samples`` is a list of :class:`PmpPoint`; by default ``n`` points are
    drawn from the problem box.
    """
    if samples is None:
        qs, vs, lqs, lvs, us = sample_points(p, n, np.random.default_rng(seed))
        samples = [PmpPoint(*z) for z in zip(qs, vs, lqs, lvs, us)]
    m = p.dim_u
    full = cost_full = 0
    u_dep = False
    for s in samples:
        F = reduced_jet(p, s.q, s.v, s.lv, s.u)
        Huu = F.dd("u", "u")
        if numerical_rank(Huu) == m and np.linalg.norm(Huu) > 1e-12:
            full += 1
        Cuu = jet_eval(lambda x: p.C(s.q, s.v, x), [BlockTag("u", m)], s.u, order=2).hess
        if numerical_rank(Cuu) == m and np.linalg.norm(Cuu) > 1e-12:
            cost_full += 1
        shifted = reduced_jet(p, s.q, s.v, s.lv, s.u + 0.5, order=1).d("u")
        u_dep = u_dep or bool(np.max(np.abs(shifted - F.d("u"))) > 1e-12)
    total = len(samples)
    flag = p.hyperregular if hyperregular_flag is None else hyperregular_flag
    if full < total:
        verdict = "singular"
    elif cost_full < total:
        verdict = "regular"
    elif flag:
        verdict = "hyperregular-candidate"
    else:
        verdict = "superregular"
    return RegularityReport(verdict, total, full, cost_full, u_dep)
