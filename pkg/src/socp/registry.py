"""Built-in problems and symmetry actions.

Problem factories accept keyword overrides for their physical parameters
and boundary data so that configuration files can rebuild them.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .diff_engine import value_of
from .errors import ConfigError, DomainError
from .group_actions import OneParamAction, phi_translation, rotation
from .ocp_model import (BoundarySpec, ControlledSode, ForceControlledLagrangianSystem,
                        OcpProblem, RunningCost, SampleBox, TerminalCost)

R_MIN = 1e-6


def _vec(x, n: int, label: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (n,):
        raise ConfigError(f"{label} must have {n} entries, got {arr.size}")
    return arr


def _boundary(T, q0, v0, qT, vT, terminal, n) -> BoundarySpec:
    return BoundarySpec(float(T), _vec(q0, n, "q0"), _vec(v0, n, "v0"), terminal,
                        _vec(qT, n, "qT"), _vec(vT, n, "vT"))


def _target_penalty(b: BoundarySpec, w: float) -> TerminalCost:
    """Quadratic pull of the terminal state toward (qT, vT); used in free mode."""
    qT, vT = b.qT, b.vT

    def phi(q, v):
        dq = q - qT
        dv = v - vT
        return 0.5 * w * (np.dot(dq, dq) + np.dot(dv, dv))

    return TerminalCost(phi)


def double_integrator(T=1.0, q0=0.0, v0=0.0, qT=1.0, vT=0.0, terminal="fixed", w=10.0) -> OcpProblem:
    """Minimal-energy transfer for a unit mass: q'' = u, C = u^2 / 2."""
    b = _boundary(T, q0, v0, qT, vT, terminal, 1)
    lag = ForceControlledLagrangianSystem(1, 1, lambda q, v: 0.5 * v[0] * v[0], lambda q, v, u: np.array([u[0]]))
    return OcpProblem(
        name="double_integrator",
        sode=ControlledSode(1, 1, lambda q, v, u: np.array([u[0]])),
        cost=RunningCost(lambda q, v, u: 0.5 * u[0] * u[0]),
        boundary=b,
        box=SampleBox(q=(-2, 2), v=(-2, 2), adj=(-3, 3), u=(-3, 3)),
        mayer=_target_penalty(b, w) if terminal == "free" else None,
        lagrangian=lag,
        params={"w": w},
        hyperregular=True,
        description="q'' = u, C = u^2/2, unit-mass Lagrangian v^2/2 with force u",
    )


def low_thrust(m=1.0, gammaM=1.0, T=1.0, q0=(1.0, 0.0), v0=(0.0, 1.0), qT=(1.03, 1.03),
               vT=(0.09, 1.03), terminal="fixed", w=10.0) -> OcpProblem:
    """Planar orbit transfer in polar coordinates (r, phi) with tangential thrust."""
    b = _boundary(T, q0, v0, qT, vT, terminal, 2)

    def check_r(r):
        if value_of(r) <= R_MIN:
            raise DomainError(f"radius {value_of(r):.3g} outside the domain r > {R_MIN}")

    def Xv(q, v, u):
        r = q[0]
        check_r(r)
        vr, vphi = v[0], v[1]
        return np.array([r * vphi ** 2 - gammaM / r ** 2, -2 * vr * vphi / r + u[0] / r])

    def L(q, v):
        r = q[0]
        check_r(r)
        return 0.5 * m * (v[0] ** 2 + r ** 2 * v[1] ** 2) + gammaM * m / r

    def fL(q, v, u):
        return np.array([0.0 * u[0], m * q[0] * u[0]])

    return OcpProblem(
        name="low_thrust",
        sode=ControlledSode(2, 1, Xv),
        cost=RunningCost(lambda q, v, u: 0.5 * u[0] * u[0]),
        boundary=b,
        box=SampleBox(q=((0.7, -np.pi), (1.4, np.pi)), v=((-0.5, 0.5), (0.5, 1.5)),
                      adj=(-1, 1), u=(-1, 1)),
        mayer=_target_penalty(b, w) if terminal == "free" else None,
        lagrangian=ForceControlledLagrangianSystem(2, 1, L, fL),
        params={"m": m, "gammaM": gammaM, "w": w},
        hyperregular=True,
        description="polar two-body motion with tangential thrust u, C = u^2/2",
    )


def rot_oscillator(omega=1.0, T=1.0, q0=(1.0, 0.0), v0=(0.0, 1.0), qT=(0.6, 0.9),
                   vT=(-0.8, 0.4), terminal="free", w=1.0) -> OcpProblem:
    """Isotropic planar oscillator actuated by a radial force u q.

    Dynamics and running cost are rotation invariant and the force is
    orthogonal to the rotation generator, so both the optimal-control and
    the mechanical momentum are first integrals.  The default terminal mode
    is a quadratic pull toward (qT, vT).
    """
    b = _boundary(T, q0, v0, qT, vT, terminal, 2)
    w2 = omega * omega
    return OcpProblem(
        name="rot_oscillator",
        sode=ControlledSode(2, 1, lambda q, v, u: (u[0] - w2) * q),
        cost=RunningCost(lambda q, v, u: 0.5 * u[0] * u[0]),
        boundary=b,
        box=SampleBox(q=(-1.5, 1.5), v=(-1.5, 1.5), adj=(-1, 1), u=(-1, 1)),
        mayer=_target_penalty(b, w) if terminal == "free" else None,
        lagrangian=ForceControlledLagrangianSystem(
            2, 1, lambda q, v: 0.5 * np.dot(v, v) - 0.5 * w2 * np.dot(q, q), lambda q, v, u: u[0] * q),
        params={"omega": omega, "w": w},
        hyperregular=True,
        description="q'' = -omega^2 q + u q, C = u^2/2",
    )


def _scalar(name, f, C, description, adj, T=1.0, q0=0.0, v0=0.0, qT=1.0, vT=0.0, terminal="fixed", w=10.0):
    """Scalar system x' = f(x, u) embedded as the velocity equation of q'' = f(q', u)."""
    b = _boundary(T, q0, v0, qT, vT, terminal, 1)
    return OcpProblem(
        name=name,
        sode=ControlledSode(1, 1, lambda q, v, u: np.array([f(v[0], u[0])])),
        cost=RunningCost(lambda q, v, u: C(v[0], u[0])),
        boundary=b,
        box=SampleBox(q=(-1, 1), v=(-1, 1), adj=adj, u=(-1, 1)),
        mayer=_target_penalty(b, w) if terminal == "free" else None,
        params={"w": w},
        description=description,
    )


def scalar_singular(**kw) -> OcpProblem:
    return _scalar("scalar_singular", lambda x, u: u, lambda x, u: 0.5 * x * x + (1 + x * x) * u,
                   "x' = u, C = x^2/2 + (1 + x^2) u (control-affine cost)", (0.5, 2.0), **kw)


def scalar_regular(**kw) -> OcpProblem:
    return _scalar("scalar_regular", lambda x, u: u + (1 + x * x) * u * u, lambda x, u: u,
                   "x' = u + (1 + x^2) u^2, C = u", (-2.0, -0.5), **kw)


def scalar_superregular(**kw) -> OcpProblem:
    return _scalar("scalar_superregular", lambda x, u: u, lambda x, u: (1 + x * x) * u * u,
                   "x' = u, C = (1 + x^2) u^2", (-2.0, 2.0), **kw)


PROBLEMS: dict[str, Callable[..., OcpProblem]] = {
    "double_integrator": double_integrator,
    "low_thrust": low_thrust,
    "scalar_singular": scalar_singular,
    "scalar_regular": scalar_regular,
    "scalar_superregular": scalar_superregular,
    "rot_oscillator": rot_oscillator,
}

ACTIONS: dict[str, Callable[[], OneParamAction]] = {
    "rotation": rotation,
    "phi_translation": phi_translation,
}

# problem name -> actions under which it is symmetric
SYMMETRIES: dict[str, tuple[str, ...]] = {
    "low_thrust": ("phi_translation",),
    "rot_oscillator": ("rotation",),
}

FORMULATIONS = ("pmp", "newlag", "newham", "forced")


def get_problem(name: str, **kw) -> OcpProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; known: {', '.join(PROBLEMS)}") from None
    try:
        return factory(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from None


def get_action(name: str) -> OneParamAction:
    try:
        return ACTIONS[name]()
    except KeyError:
        raise ConfigError(f"unknown action {name!r}; known: {', '.join(ACTIONS)}") from None
