"""Problem definitions: controlled SODEs, costs, forced Lagrangian systems and boundary data.

All problem callables take numpy arrays ``(q, v, u)`` (or ``(q, v)``) and
must be written with numpy/elementary operations only, so that they can
be evaluated on object arrays of jets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping, Sequence

import numpy as np

from .diff_engine import BlockTag, Jet, fd_check, jet_eval, jet_eval_nested, value_of
from .errors import RegularityError

MASS_COND_LIMIT = 1e12
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class ControlledSode:
    dim_q: int
    dim_u: int
    Xv: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RunningCost:
    C: Callable[[np.ndarray, np.ndarray, np.ndarray], object]


@dataclass(frozen=True)
class TerminalCost:
    phi: Callable[[np.ndarray, np.ndarray], object]


@dataclass(frozen=True)
class ForceControlledLagrangianSystem:
    dim_q: int
    dim_u: int
    L: Callable[[np.ndarray, np.ndarray], object]
    fL: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoundarySpec:
    T: float
    q0: np.ndarray
    v0: np.ndarray
    terminal: Literal["fixed", "free"] = "fixed"
    qT: np.ndarray | None = None
    vT: np.ndarray | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.terminal not in ("fixed", "free"):
            raise ValueError(f"unknown terminal mode {self.terminal!r}")
        if self.terminal == "fixed" and (self.qT is None or self.vT is None):
            raise ValueError("fixed terminal mode needs qT and vT")


@dataclass(frozen=True)
class SampleBox:
    """Coordinate boxes used to draw random evaluation points."""

    q: tuple[Sequence[float], Sequence[float]]
    v: tuple[Sequence[float], Sequence[float]]
    adj: tuple[Sequence[float], Sequence[float]]
    u: tuple[Sequence[float], Sequence[float]]


@dataclass(frozen=True)
class OcpProblem:
    name: str
    sode: ControlledSode
    cost: RunningCost
    boundary: BoundarySpec
    box: SampleBox
    mayer: TerminalCost | None = None
    lagrangian: ForceControlledLagrangianSystem | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    hyperregular: bool = False
    description: str = ""

    @property
    def dim_q(self) -> int:
        return self.sode.dim_q

    @property
    def dim_u(self) -> int:
        return self.sode.dim_u

    def Xv(self, q, v, u):
        return self.sode.Xv(q, v, u)

    def C(self, q, v, u):
        return self.cost.C(q, v, u)

    def phi(self, q, v):
        return 0.0 if self.mayer is None else self.mayer.phi(q, v)


def sample_points(p: OcpProblem, n: int, rng: np.random.Generator):
    """Draw ``n`` points ``(q, v, adj1, adj2, u)`` uniformly from the problem box."""
    dq, du = p.dim_q, p.dim_u

    def draw(box, size):
        lo, hi = (np.broadcast_to(np.asarray(b, float), (size,)) for b in box)
        return rng.uniform(lo, hi, size=(n, size))

    return (draw(p.box.q, dq), draw(p.box.v, dq), draw(p.box.adj, dq),
            draw(p.box.adj, dq), draw(p.box.u, du))


# -- Lagrangian to SODE -------------------------------------------------------

def _solve_object(A, b):
    """Gaussian elimination with partial pivoting on (possibly jet-valued) entries."""
    A = [list(row) for row in A]
    b = list(b)
    n = len(b)
    for k in range(n):
        piv = max(range(k, n), key=lambda i: abs(value_of(A[i][k])))
        if value_of(A[piv][k]) == 0:
            raise RegularityError("singular mass matrix", condition=np.inf)
        A[k], A[piv] = A[piv], A[k]
        b[k], b[piv] = b[piv], b[k]
        for i in range(k + 1, n):
            fct = A[i][k] / A[k][k]
            for j in range(k, n):
                A[i][j] = A[i][j] - fct * A[k][j]
            b[i] = b[i] - fct * b[k]
    x = [None] * n
    for i in reversed(range(n)):
        s = b[i]
        for j in range(i + 1, n):
            s = s - A[i][j] * x[j]
        x[i] = s / A[i][i]
    return np.array(x, dtype=object)


def lagrangian_jet(sys: ForceControlledLagrangianSystem, q, v):
    """Gradient blocks and Hessian blocks of L at a float point.

    Returns ``(D1L, D2L, Lqq, Lqv, Lvv)`` with ``Lqv[i, j] = d^2L/dq_i dv_j``.
    """
    n = sys.dim_q
    J = jet_eval(lambda x: sys.L(x[:n], x[n:]), [BlockTag("q", n), BlockTag("v", n)],
                 np.concatenate([q, v]), order=2)
    return J.d("q"), J.d("v"), J.dd("q", "q"), J.dd("q", "v"), J.dd("v", "v")


def mass_matrix(sys: ForceControlledLagrangianSystem, q, v) -> np.ndarray:
    return lagrangian_jet(sys, np.asarray(q, float), np.asarray(v, float))[4]


def check_mass(M: np.ndarray) -> float:
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > MASS_COND_LIMIT:
        raise RegularityError(f"singular mass matrix D22L (condition {cond:.3g})", condition=cond)
    return float(cond)


def sode_from_lagrangian(sys: ForceControlledLagrangianSystem) -> ControlledSode:
    """Explicit acceleration ``(D22L)^-1 (D1L + fL - D12L v)`` of a forced Lagrangian system."""
    n = sys.dim_q

    def Xv(q, v, u):
        q_arr = np.asarray(q, dtype=object)
        v_arr = np.asarray(v, dtype=object)
        nested = any(isinstance(e, Jet) for e in np.concatenate([q_arr, v_arr, np.asarray(u, dtype=object)]))
        if not nested:
            qf, vf = q_arr.astype(float), v_arr.astype(float)
            D1L, _, _, Lqv, Lvv = lagrangian_jet(sys, qf, vf)
            check_mass(Lvv)
            rhs = D1L + np.asarray(sys.fL(qf, vf, np.asarray(u, float)), float) - Lqv.T @ vf
            return np.linalg.solve(Lvv, rhs)
        _, grad, hess = jet_eval_nested(lambda x: sys.L(x[:n], x[n:]), np.concatenate([q_arr, v_arr]), 2)
        D1L = grad[:n]
        Lvq = hess[n:, :n]
        Lvv = hess[n:, n:]
        rhs = D1L + np.asarray(sys.fL(q_arr, v_arr, u), dtype=object) - Lvq.dot(v_arr)
        return _solve_object(Lvv, rhs)

    return ControlledSode(n, sys.dim_u, Xv)


# -- classification and diagnostics -------------------------------------------

def control_jacobian(sode: ControlledSode, q, v, u) -> np.ndarray:
    """``D3 Xv`` at a point, shape ``(dim_q, dim_u)``."""
    dq, du = sode.dim_q, sode.dim_u
    J = jet_eval(lambda x: sode.Xv(x[:dq], x[dq:2 * dq], x[2 * dq:]),
                 [BlockTag("q", dq), BlockTag("v", dq), BlockTag("u", du)],
                 np.concatenate([q, v, u]), order=1)
    return J.d("u")


def numerical_rank(A: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def actuation_classify(sode: ControlledSode, samples) -> str:
    """``"full"`` iff ``rank D3 Xv == dim_q`` at every sample ``(q, v, u)``."""
    for q, v, u in samples:
        if numerical_rank(control_jacobian(sode, q, v, u)) < sode.dim_q:
            return "under"
    return "full"


@dataclass
class Diagnostics:
    errors: list[str] = field(default_factory=list)
    checks: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_problem(p: OcpProblem, n: int = 100, seed: int = 42) -> Diagnostics:
    """Spot-check dimensions, smoothness and Lagrangian/SODE agreement.

    Problems are collected into the returned record instead of raised.
    """
    diag = Diagnostics()
    rng = np.random.default_rng(seed)
    dq, du = p.dim_q, p.dim_u
    qs, vs, _, _, us = sample_points(p, n, rng)
    b = p.boundary
    for label, arr in (("q0", b.q0), ("v0", b.v0), ("qT", b.qT), ("vT", b.vT)):
        if arr is not None and np.size(arr) != dq:
            diag.errors.append(f"dimension: boundary {label} has length {np.size(arr)}, expected {dq}")
    try:
        out = np.asarray(p.Xv(qs[0], vs[0], us[0]), dtype=float)
        if out.shape != (dq,):
            diag.errors.append(f"dimension: Xv returns shape {out.shape}, expected ({dq},)")
        c = np.asarray(p.C(qs[0], vs[0], us[0]), dtype=float)
        if c.shape != ():
            diag.errors.append(f"dimension: C returns shape {c.shape}, expected scalar")
    except Exception as exc:  # noqa: BLE001 - diagnostics collect everything
        diag.errors.append(f"evaluation: {exc}")
        return diag
    if diag.errors:
        return diag

    worst = 0.0
    for k in range(min(n, 5)):
        x = np.concatenate([qs[k], vs[k], us[k]])
        worst = max(worst, fd_check(lambda z: p.Xv(z[:dq], z[dq:2 * dq], z[2 * dq:]), x),
                    fd_check(lambda z: p.C(z[:dq], z[dq:2 * dq], z[2 * dq:]), x))
    diag.checks["jet_vs_fd"] = worst
    if worst > 1e-6:
        diag.errors.append(f"smoothness: jet/FD deviation {worst:.3g}")

    if p.lagrangian is not None:
        lag = p.lagrangian
        if lag.dim_q != dq or lag.dim_u != du:
            diag.errors.append("dimension: lagrangian dims differ from the SODE")
            return diag
        expl = sode_from_lagrangian(lag)
        resid, cond = 0.0, 0.0
        for k in range(n):
            try:
                M = mass_matrix(lag, qs[k], vs[k])
                cond = max(cond, float(np.linalg.cond(M)))
                a = np.asarray(expl.Xv(qs[k], vs[k], us[k]), float)
            except RegularityError as exc:
                diag.errors.append(f"regularity: {exc}")
                break
            ref = np.asarray(p.Xv(qs[k], vs[k], us[k]), float)
            resid = max(resid, float(np.max(np.abs(a - ref))))
        diag.checks["lagrangian_residual"] = resid
        diag.checks["mass_condition"] = cond
        if resid > 1e-10:
            diag.errors.append(f"lagrangian: Euler-Lagrange expansion differs from Xv by {resid:.3g}")
    return diag
