"""Coordinate forms of the Tulczyjew maps, the musical maps of a forced
Lagrangian system and the constant presymplectic forms of the double bundles.

Every point carries an explicit chart tag.  Coordinate order per chart
(four ``dim_q`` blocks followed by the control block):

=============  ===================================
``T*TQ+E``     (q, v, lam_q, lam_v, u)
``TT*Q+E``     (q, k, v_q, v_k, u)
``T*T*Q+E``    (q, k, p_q, p_k, u)
``TTQ+E``      (q, v, X_q, X_v, u)
``T*TQ+L``     (q, xi, w_q, w_xi, u)
``TT*Q+F``     (q, p, v_q, v_p, u)
``T*T*Q+F``    (q, p, lam_q, lam_p, u)
``T*TQ+F``     (q, v, lam_q, lam_v, u)
=============  ===================================

Two-form matrices use ``W[a, b] = 1, W[b, a] = -1`` for ``da ^ db`` so that
the contraction ``i_X w`` has components ``W.T @ X``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .diff_engine import BlockTag, jet_eval
from .errors import ChartError, DimensionError
from .formulations import (ForcedImagePoint, ForcedPoint, NewHamPoint, NewLagPoint, PmpPoint,
                           _require_lagrangian, build_forced_hamiltonian, forced_new_hamiltonian,
                           forced_new_lagrangian, new_energy, new_hamiltonian, new_lagrangian,
                           pontryagin_h, reduced_jet)
from .group_actions import OneParamAction, S_GRID, lift_double
from .ocp_model import OcpProblem, check_mass, lagrangian_jet, sample_points
from .optimality import solve_max_condition

CHARTS = ("T*TQ+E", "TT*Q+E", "T*T*Q+E", "TTQ+E", "T*TQ+L", "TT*Q+F", "T*T*Q+F", "T*TQ+F")
FD_STEP = 1e-6


@dataclass(frozen=True)
class TwistedPoint:
    chart: str
    coords: np.ndarray
    dim_q: int
    dim_u: int = 0

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ChartError(f"unknown chart {self.chart!r}")
        c = np.array(self.coords, dtype=float)
        if c.ndim != 1 or c.size != 4 * self.dim_q + self.dim_u:
            raise DimensionError(
                f"{self.chart} point needs {4 * self.dim_q + self.dim_u} coordinates, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def block(self, i: int) -> np.ndarray:
        n = self.dim_q
        return self.coords[i * n:(i + 1) * n]

    @property
    def u(self) -> np.ndarray:
        return self.coords[4 * self.dim_q:]

    def with_coords(self, chart: str, coords) -> "TwistedPoint":
        return TwistedPoint(chart, coords, self.dim_q, self.dim_u)


def make_point(chart: str, *blocks, u=()) -> TwistedPoint:
    """Build a point from its four blocks and an optional control."""
    blocks = [np.atleast_1d(np.asarray(b, float)) for b in blocks]
    if len(blocks) != 4:
        raise DimensionError("a double-bundle point has four blocks")
    u = np.atleast_1d(np.asarray(u, float))
    return TwistedPoint(chart, np.concatenate(blocks + [u]), blocks[0].size, u.size)


def _expect(pt: TwistedPoint, chart: str) -> None:
    if not isinstance(pt, TwistedPoint):
        raise ChartError(f"expected a TwistedPoint in chart {chart}, got {type(pt).__name__}")
    if pt.chart != chart:
        raise ChartError(f"expected a point in chart {chart}, got {pt.chart}")


def _rearranged(pt: TwistedPoint, chart: str, a, b, c, d) -> TwistedPoint:
    return pt.with_coords(chart, np.concatenate([a, b, c, d, pt.u]))


# -- Tulczyjew maps ---------------------------------------------------------------------

def alpha(pt: TwistedPoint) -> TwistedPoint:
    """(q, k, v_q, v_k, u) -> (q, v_q, v_k, k, u)."""
    _expect(pt, "TT*Q+E")
    q, k, vq, vk = (pt.block(i) for i in range(4))
    return _rearranged(pt, "T*TQ+E", q, vq, vk, k)


def alpha_inv(pt: TwistedPoint) -> TwistedPoint:
    _expect(pt, "T*TQ+E")
    q, v, lq, lv = (pt.block(i) for i in range(4))
    return _rearranged(pt, "TT*Q+E", q, lv, v, lq)


def beta(pt: TwistedPoint) -> TwistedPoint:
    """(q, k, v_q, v_k, u) -> (q, k, -v_k, v_q, u)."""
    _expect(pt, "TT*Q+E")
    q, k, vq, vk = (pt.block(i) for i in range(4))
    return _rearranged(pt, "T*T*Q+E", q, k, -vk, vq)


def beta_inv(pt: TwistedPoint) -> TwistedPoint:
    _expect(pt, "T*T*Q+E")
    q, k, pq, pk = (pt.block(i) for i in range(4))
    return _rearranged(pt, "TT*Q+E", q, k, pk, -pq)


def kappa(pt: TwistedPoint) -> TwistedPoint:
    """Swap of the two middle blocks: (q, v, X_q, X_v, u) -> (q, X_q, v, X_v, u)."""
    _expect(pt, "TTQ+E")
    q, v, Xq, Xv = (pt.block(i) for i in range(4))
    return _rearranged(pt, "TTQ+E", q, Xq, v, Xv)


kappa_inv = kappa


# -- forced Lagrangian systems -------------------------------------------------------------

def _mass_and_force_jacobian(p: OcpProblem, q, v, u):
    lag = _require_lagrangian(p)
    M = lagrangian_jet(lag, q, v)[4]
    check_mass(M)
    D2f = jet_eval(lambda w: lag.fL(q, w, u), [BlockTag("v", p.dim_q)], v, order=1).grad
    return M, np.atleast_2d(D2f)


def musical_flat(p: OcpProblem, pt: TwistedPoint) -> TwistedPoint:
    """(q, v, xi, v_xi, u) -> (q, v, M v_xi + D2fL^T xi, M xi, u) with ``M = D22 L``."""
    _expect(pt, "TTQ+E")
    q, v, xi, vxi = (pt.block(i) for i in range(4))
    M, D2f = _mass_and_force_jacobian(p, q, v, pt.u)
    return _rearranged(pt, "T*TQ+E", q, v, M @ vxi + D2f.T @ xi, M @ xi)


def musical_sharp(p: OcpProblem, pt: TwistedPoint) -> TwistedPoint:
    """Inverse of :func:`musical_flat`."""
    _expect(pt, "T*TQ+E")
    q, v, vkap, kap = (pt.block(i) for i in range(4))
    M, D2f = _mass_and_force_jacobian(p, q, v, pt.u)
    xi = np.linalg.solve(M, kap)
    return _rearranged(pt, "TTQ+E", q, v, xi, np.linalg.solve(M, vkap - D2f.T @ xi))


def forced_lagrangian_tangent(p: OcpProblem, pt: TwistedPoint) -> float:
    """``(D1L + fL) . X_q + D2L . X_v - C`` on the tangent double bundle."""
    _expect(pt, "TTQ+E")
    lag = _require_lagrangian(p)
    q, v, Xq, Xv = (pt.block(i) for i in range(4))
    D1L, D2L = lagrangian_jet(lag, q, v)[:2]
    force = np.asarray(lag.fL(q, v, pt.u), float)
    return float((D1L + force) @ Xq + D2L @ Xv - p.C(q, v, pt.u))


def chi_tilde1(p: OcpProblem, pt: TwistedPoint) -> TwistedPoint:
    """(q, xi, w_q, w_xi, u) -> (q, p = w_xi, lam_q = -w_q, lam_p = xi, u).

    Controls are carried by the identity lift.
    """
    _expect(pt, "T*TQ+L")
    _require_lagrangian(p)
    q, xi, wq, wxi = (pt.block(i) for i in range(4))
    return _rearranged(pt, "T*T*Q+F", q, wxi, -wq, xi)


def chi_tilde1_inv(p: OcpProblem, pt: TwistedPoint) -> TwistedPoint:
    _expect(pt, "T*T*Q+F")
    q, pm, lq, lp = (pt.block(i) for i in range(4))
    return _rearranged(pt, "T*TQ+L", q, lp, -lq, pm)


def forced_pontryagin_h(p: OcpProblem, pt: TwistedPoint) -> float:
    """Pontryagin Hamiltonian of the forced Hamiltonian system at a ``T*T*Q+F`` point."""
    _expect(pt, "T*T*Q+F")
    sys = build_forced_hamiltonian(p)
    return sys.pontryagin_h(*(pt.block(i) for i in range(4)), pt.u)


# -- composition identities ----------------------------------------------------------------

def _pmp_value(p, pt: TwistedPoint) -> float:
    _expect(pt, "T*TQ+E")
    return pontryagin_h(p, PmpPoint(*(pt.block(i) for i in range(4)), pt.u))


@dataclass(frozen=True)
class CompositionReport:
    new_lagrangian: float
    new_hamiltonian: float
    forced: float | None
    kappa_forced: float | None

    @property
    def max(self) -> float:
        return max(v for v in (self.new_lagrangian, self.new_hamiltonian, self.forced, self.kappa_forced)
                   if v is not None)


def composition_residuals(p: OcpProblem, n: int = 100, seed: int = 42) -> CompositionReport:
    """Max deviations of the chart-composition identities at ``n`` seeded points.

    Checked: new Lagrangian = H(-1) o alpha, new Hamiltonian =
    -H(-1) o alpha o beta^-1 and, with a Lagrangian, the forced new
    Hamiltonian = -H(-1)^forced o chi_tilde1 and the forced new
    Lagrangian = (tangent Lagrangian) o kappa.
    """
    qs, vs, a1, a2, us = sample_points(p, n, np.random.default_rng(seed))
    e_lag = e_ham = 0.0
    e_forced = e_kappa = None if p.lagrangian is None else 0.0
    for q, v, x, y, u in zip(qs, vs, a1, a2, us):
        lag_pt = make_point("TT*Q+E", q, x, v, y, u=u)
        lhs = new_lagrangian(p, NewLagPoint(q, x, v, y, u))
        e_lag = max(e_lag, abs(lhs - _pmp_value(p, alpha(lag_pt))))
        ham_pt = make_point("T*T*Q+E", q, x, y, v, u=u)
        lhs = new_hamiltonian(p, NewHamPoint(q, x, y, v, u))
        e_ham = max(e_ham, abs(lhs + _pmp_value(p, alpha(beta_inv(ham_pt)))))
        if p.lagrangian is not None:
            img = make_point("T*TQ+L", q, x, y, _momentum(p, q, v), u=u)
            lhs = forced_new_hamiltonian(p, ForcedImagePoint(*(img.block(i) for i in range(4)), u))
            e_forced = max(e_forced, abs(lhs + forced_pontryagin_h(p, chi_tilde1(p, img))))
            fpt = make_point("TTQ+E", q, x, v, y, u=u)  # (q, xi, v_q, v_xi)
            lhs = forced_new_lagrangian(p, ForcedPoint(q, x, v, y, u))
            e_kappa = max(e_kappa, abs(lhs - forced_lagrangian_tangent(p, kappa(fpt))))
    return CompositionReport(e_lag, e_ham, e_forced, e_kappa)


def _momentum(p, q, v):
    return lagrangian_jet(p.lagrangian, q, v)[1]


# -- two-forms ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoForm:
    matrix: np.ndarray
    chart: str = ""

    def __post_init__(self):
        W = np.array(self.matrix, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DimensionError("a two-form matrix must be square")
        W = 0.5 * (W - W.T)
        W.setflags(write=False)
        object.__setattr__(self, "matrix", W)

    def __sub__(self, other: "TwoForm") -> "TwoForm":
        return TwoForm(self.matrix - other.matrix, self.chart)

    def __neg__(self) -> "TwoForm":
        return TwoForm(-self.matrix, self.chart)

    def contract(self, X) -> np.ndarray:
        """Components of ``i_X w``."""
        return self.matrix.T @ np.asarray(X, float)

    def pullback(self, J, chart: str = "") -> "TwoForm":
        J = np.asarray(J, float)
        return TwoForm(J.T @ self.matrix @ J, chart)


# (first block index, second block index) pairs of each canonical form
_PAIRINGS = {
    "T*TQ+E": ((0, 2), (1, 3)),   # dq ^ dlam_q + dv ^ dlam_v
    "T*T*Q+E": ((0, 2), (1, 3)),  # dq ^ dp_q + dk ^ dp_k
    "TT*Q+E": ((0, 3), (2, 1)),   # dq ^ dv_k + dv_q ^ dk
}


def presymplectic_form(chart: str, dim_q: int, dim_u: int = 0) -> TwoForm:
    """Constant form of the chart, zero on the control block."""
    if chart not in _PAIRINGS:
        raise ChartError(f"no canonical two-form registered for chart {chart!r}")
    n = dim_q
    W = np.zeros((4 * n + dim_u, 4 * n + dim_u))
    for a, b in _PAIRINGS[chart]:
        for i in range(n):
            W[a * n + i, b * n + i] = 1.0
            W[b * n + i, a * n + i] = -1.0
    return TwoForm(W, chart)


def geometric_residual(form: TwoForm, field, dH) -> float:
    """``max |i_field w - dH|`` over the state coordinates (control block ignored)."""
    field = np.asarray(field, float)
    dH = np.asarray(dH, float)
    size = form.matrix.shape[0]
    if field.size > size or dH.size > size:
        raise DimensionError("field or differential longer than the form")
    X = np.zeros(size)
    X[:field.size] = field
    r = form.contract(X)[:dH.size] - dH
    return float(np.max(np.abs(r))) if r.size else 0.0


def fd_jacobian(fn: Callable[[np.ndarray], np.ndarray], x, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian."""
    x = np.asarray(x, float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.asarray(fn(x + e), float) - np.asarray(fn(x - e), float)) / (2 * step))
    return np.column_stack(cols)


def map_jacobian(map_fn: Callable[[TwistedPoint], TwistedPoint], pt: TwistedPoint,
                 step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of a chart map, control block included."""
    return fd_jacobian(lambda c: map_fn(pt.with_coords(pt.chart, c)).coords, pt.coords, step)


def pullback_residuals(dim_q: int, dim_u: int = 0, n: int = 10, seed: int = 42) -> tuple[float, float]:
    """Entrywise ``J_a^T w_TQ J_a - w_a`` and ``J_b^T w_T*Q J_b + w_a`` maxima at random points."""
    rng = np.random.default_rng(seed)
    w_tq = presymplectic_form("T*TQ+E", dim_q, dim_u)
    w_tsq = presymplectic_form("T*T*Q+E", dim_q, dim_u)
    w_a = presymplectic_form("TT*Q+E", dim_q, dim_u)
    ea = eb = 0.0
    for _ in range(n):
        pt = TwistedPoint("TT*Q+E", rng.uniform(-1, 1, 4 * dim_q + dim_u), dim_q, dim_u)
        ea = max(ea, float(np.max(np.abs(w_tq.pullback(map_jacobian(alpha, pt)).matrix - w_a.matrix))))
        eb = max(eb, float(np.max(np.abs(w_tsq.pullback(map_jacobian(beta, pt)).matrix + w_a.matrix))))
    return ea, eb


# -- the new control Lagrangian as a mechanical system -------------------------------------

def _lag_state(pt: TwistedPoint) -> np.ndarray:
    _expect(pt, "TT*Q+E")
    return pt.coords[:4 * pt.dim_q]


def fiber_jacobian(p: OcpProblem, x, u0=None) -> np.ndarray:
    """Jacobian of (q, k, v_q, v_k) -> (q, k, v_k + D_v F, v_q) with the control
    eliminated, the control sensitivity taken from the implicit function theorem."""
    n = p.dim_q
    x = np.asarray(x, float)
    u = solve_max_condition(p, "newlag", x, u0)
    q, k, vq = x[:n], x[n:2 * n], x[2 * n:3 * n]
    F = reduced_jet(p, q, vq, k, u, order=2)
    Fuu = np.atleast_2d(F.dd("u", "u"))
    # columns ordered (q, k, v_q, v_k); F's blocks are (q, v, k, u)
    Fux = np.hstack([F.dd("u", "q"), F.dd("u", "k"), F.dd("u", "v"), np.zeros((p.dim_u, n))])
    dU = -np.linalg.solve(Fuu, Fux)
    dFv = np.hstack([F.dd("v", "q"), F.dd("v", "k"), F.dd("v", "v"), np.zeros((n, n))]) + F.dd("v", "u") @ dU
    I, Z = np.eye(n), np.zeros((n, n))
    return np.vstack([np.hstack([I, Z, Z, Z]), np.hstack([Z, I, Z, Z]),
                      dFv + np.hstack([Z, Z, Z, I]), np.hstack([Z, Z, I, Z])])


def lagrangian_form(p: OcpProblem, pt: TwistedPoint) -> TwoForm:
    """Poincare-Cartan form of the new control Lagrangian (control eliminated):
    the pullback of the canonical form on ``T*T*Q`` through the fiber derivative."""
    x = _lag_state(pt)
    J = fiber_jacobian(p, x, pt.u if pt.u.size else None)
    return presymplectic_form("T*T*Q+E", p.dim_q).pullback(J, "TT*Q+E")


def energy_differential(p: OcpProblem, pt: TwistedPoint, step: float = FD_STEP) -> np.ndarray:
    """Differential of the new-Lagrangian energy with the control re-solved."""
    x = _lag_state(pt)
    n = p.dim_q
    u0 = solve_max_condition(p, "newlag", x, pt.u if pt.u.size else None)

    def E(y):
        u = solve_max_condition(p, "newlag", y, u0)
        return np.array([new_energy(p, NewLagPoint(y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:], u))])

    return fd_jacobian(E, x, step)[0]


def pmp_differential(p: OcpProblem, pt: TwistedPoint) -> np.ndarray:
    """Partial differential of H(-1) in the state at fixed control (equals the
    total differential at a maximizer)."""
    _expect(pt, "T*TQ+E")
    q, v, lq, lv = (pt.block(i) for i in range(4))
    F = reduced_jet(p, q, v, lv, pt.u, order=1)
    return np.concatenate([F.d("q"), lq + F.d("v"), v, F.d("k")])


def closedness_residual(p: OcpProblem, pt: TwistedPoint, step: float = 1e-4) -> float:
    """Cyclic-sum surrogate of ``d(w_L - w_alpha)`` by central differences.

    For a closed two-form ``Z`` the sum ``d_i Z_jk + d_j Z_ki + d_k Z_ij``
    vanishes; the maximum over all index triples is returned.
    """
    x = _lag_state(pt)
    n = x.size
    w_a = presymplectic_form("TT*Q+E", p.dim_q).matrix
    u = pt.u

    def Z(y):
        return lagrangian_form(p, TwistedPoint("TT*Q+E", np.concatenate([y, u]), p.dim_q, p.dim_u)).matrix - w_a

    dZ = np.zeros((n, n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        dZ[i] = (Z(x + e) - Z(x - e)) / (2 * step)
    cyc = dZ + np.transpose(dZ, (1, 2, 0)) + np.transpose(dZ, (2, 0, 1))
    return float(np.max(np.abs(cyc)))


# -- the two displayed fields ------------------------------------------------------------------

def alpha_field_display(p: OcpProblem, x, u) -> np.ndarray:
    """Field on ``TT*Q`` obtained through alpha from the PMP field:
    ``(v_q, D2C - v_k - k.D2Xv, Xv, D1C - k.D1Xv)``."""
    n = p.dim_q
    q, k, vq, vk = (np.asarray(x[i * n:(i + 1) * n], float) for i in range(4))
    F = reduced_jet(p, q, vq, k, np.atleast_1d(u), order=1)
    return np.concatenate([vq, -F.d("v") - vk, F.d("k"), -F.d("q")])


def newlag_field_display(p: OcpProblem, x, u, du) -> np.ndarray:
    """Euler-Lagrange field of the new Lagrangian as usually written in adapted
    coordinates, without the ``k' . D2Xv`` contribution to the last block."""
    n = p.dim_q
    q, k, vq, vk = (np.asarray(x[i * n:(i + 1) * n], float) for i in range(4))
    F = reduced_jet(p, q, vq, k, np.atleast_1d(u), order=2)
    acc = F.d("k")
    last = F.d("q") - F.dd("v", "q") @ vq - F.dd("v", "v") @ acc - F.dd("v", "u") @ np.atleast_1d(du)
    return np.concatenate([vq, vk, acc, last])


# -- equivariance --------------------------------------------------------------------------

def equivariance_residual(action: OneParamAction, pts: Sequence[TwistedPoint],
                          s_grid: Sequence[float] = S_GRID) -> tuple[float, float]:
    """Max deviations of ``alpha o lift = lift o alpha`` and ``beta o lift = lift o beta``."""
    ea = eb = 0.0
    for pt in pts:
        _expect(pt, "TT*Q+E")
        for s in s_grid:
            moved = pt.with_coords("TT*Q+E", lift_double(action, s, pt.coords, "TT*Q"))
            lhs = alpha(moved).coords
            rhs = lift_double(action, s, alpha(pt).coords, "T*TQ")
            ea = max(ea, float(np.max(np.abs(lhs - rhs))))
            lhs = beta(moved).coords
            rhs = lift_double(action, s, beta(pt).coords, "T*T*Q")
            eb = max(eb, float(np.max(np.abs(lhs - rhs))))
    return ea, eb


__all__ = [
    "CHARTS", "TwistedPoint", "make_point", "alpha", "alpha_inv", "beta", "beta_inv", "kappa",
    "kappa_inv", "musical_flat", "musical_sharp", "forced_lagrangian_tangent", "chi_tilde1",
    "chi_tilde1_inv", "forced_pontryagin_h", "CompositionReport", "composition_residuals", "TwoForm",
    "presymplectic_form", "geometric_residual", "fd_jacobian", "map_jacobian", "pullback_residuals",
    "fiber_jacobian", "lagrangian_form", "energy_differential", "pmp_differential", "closedness_residual",
    "alpha_field_display", "newlag_field_display", "equivariance_residual",
]
