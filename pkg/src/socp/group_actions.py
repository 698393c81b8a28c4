"""One-parameter group actions on Q and their lifts to the tangent, cotangent and double bundles.

Points in the double bundles are flat arrays of four ``dim_q`` blocks,
optionally followed by a control block:

* ``"T*TQ"``  -> (q, v, lam_q, lam_v)
* ``"TT*Q"``  -> (q, k, v_q, v_k)
* ``"T*T*Q"`` -> (q, k, p_q, p_k)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .diff_engine import BlockTag, jet_eval
from .errors import ChartError

S_GRID = (0.1, -0.1, 0.01, -0.01, 1.0, -1.0)
GENERATOR_STEP = 1e-6


@dataclass(frozen=True)
class OneParamAction:
    """Action ``q -> phi(s, q)`` with Jacobian ``dphi(s, q)``.

    ``control_map(s, q, v, u)`` describes how controls transform (identity
    when omitted); ``generator`` is an optional analytic infinitesimal
    generator.
    """

    name: str
    dim: int
    phi: Callable[[float, np.ndarray], np.ndarray]
    dphi: Callable[[float, np.ndarray], np.ndarray]
    generator: Callable[[np.ndarray], np.ndarray] | None = None
    control_map: Callable | None = None

    def map_control(self, s, q, v, u):
        return np.asarray(u, float) if self.control_map is None else self.control_map(s, q, v, u)


@dataclass(frozen=True)
class Generator:
    XQ: Callable[[np.ndarray], np.ndarray]
    dim: int

    def jacobian(self, q) -> np.ndarray:
        """``D X^Q(q)`` via jets."""
        J = jet_eval(self.XQ, [BlockTag("q", self.dim)], q, order=1)
        return J.grad

    def tangent(self, q, v):
        """Generator of the tangent-lifted action at (q, v)."""
        return np.asarray(self.XQ(np.asarray(q, float)), float), self.jacobian(q) @ v

    def cotangent(self, q, k):
        """Generator of the cotangent-lifted action at (q, k)."""
        return np.asarray(self.XQ(np.asarray(q, float)), float), -self.jacobian(q).T @ k


# -- concrete actions ---------------------------------------------------------

def _rot(s):
    c, sn = np.cos(s), np.sin(s)
    return np.array([[c, -sn], [sn, c]])


def rotation() -> OneParamAction:
    """Rotation of the plane by angle s."""
    return OneParamAction("rotation", 2, lambda s, q: _rot(s) @ q, lambda s, q: _rot(s),
                          generator=lambda q: np.array([-q[1], q[0]]))


def phi_translation() -> OneParamAction:
    """Shift of the angular coordinate in polar coordinates (r, phi)."""
    return OneParamAction("phi_translation", 2, lambda s, q: q + np.array([0.0, s]),
                          lambda s, q: np.eye(2), generator=lambda q: np.array([0.0 * q[0], 1.0 + 0.0 * q[1]]))


def polynomial_flow(dim: int = 2) -> OneParamAction:
    """Flow of the quadratic field q_i^2: ``q_i -> q_i / (1 - s q_i)`` (nonlinear test action)."""

    def phi(s, q):
        return np.array([qi / (1 - s * qi) for qi in q])

    def dphi(s, q):
        M = np.zeros((dim, dim), dtype=object)
        for i, qi in enumerate(q):
            M[i, i] = 1.0 / (1 - s * qi) ** 2
        return M

    return OneParamAction("polynomial_flow", dim, phi, dphi, generator=lambda q: np.array([qi * qi for qi in q]))


# -- lifts ----------------------------------------------------------------------

def lift_tangent(a: OneParamAction, s: float, q, v):
    q, v = np.asarray(q, float), np.asarray(v, float)
    return np.asarray(a.phi(s, q), float), np.asarray(a.dphi(s, q), float) @ v


def lift_cotangent(a: OneParamAction, s: float, q, lam):
    y = np.asarray(a.phi(s, np.asarray(q, float)), float)
    A = np.asarray(a.dphi(-s, y), float)
    return y, A.T @ np.asarray(lam, float)


def _vector_jacobian(fn, y) -> np.ndarray:
    """Jacobian of a vector function of y via first-order jets."""
    return jet_eval(fn, [BlockTag("y", len(y))], y, order=1).grad


def lift_double(a: OneParamAction, s: float, pt, chart: str) -> np.ndarray:
    """Lift the action to one of the double bundles (controls mapped by ``control_map``)."""
    pt = np.asarray(pt, float)
    n = a.dim
    x1, x2, x3, x4 = pt[:n], pt[n:2 * n], pt[2 * n:3 * n], pt[3 * n:4 * n]
    u = pt[4 * n:]
    q = x1
    y = np.asarray(a.phi(s, q), float)
    A = np.asarray(a.dphi(-s, y), float)
    B = np.asarray(a.dphi(s, q), float)
    if chart == "T*TQ":
        v, lq, lv = x2, x3, x4
        v_new = B @ v
        K = _vector_jacobian(lambda z: a.dphi(-s, z) @ v_new, y)
        out = [y, v_new, A.T @ lq + K.T @ lv, A.T @ lv]
        base_v = v
    elif chart == "TT*Q":
        k, vq, vk = x2, x3, x4
        vq_new = B @ vq
        K = _vector_jacobian(lambda z: a.dphi(-s, z).T @ k, y)
        out = [y, A.T @ k, vq_new, A.T @ vk + K @ vq_new]
        base_v = vq
    elif chart == "T*T*Q":
        k, pq, pk = x2, x3, x4
        mu = A.T @ k
        K = _vector_jacobian(lambda z: a.dphi(s, a.phi(-s, z)).T @ mu, y)
        out = [y, mu, A.T @ pq + K.T @ pk, B @ pk]
        base_v = pk
    else:
        raise ChartError(f"lift_double does not support chart {chart!r}")
    if u.size:
        out.append(np.atleast_1d(a.map_control(s, q, base_v, u)))
    return np.concatenate(out)


def invariance_residual(fn: Callable[[np.ndarray], float], a: OneParamAction, pt, chart: str,
                        s_grid: Sequence[float] = S_GRID) -> float:
    """``max_s |fn(lift_s(pt)) - fn(pt)|`` over the s grid."""
    base = float(fn(np.asarray(pt, float)))
    return max(abs(float(fn(lift_double(a, s, pt, chart))) - base) for s in s_grid)


def generator_eval(a: OneParamAction, step: float = GENERATOR_STEP) -> Generator:
    """Infinitesimal generator by central difference in s."""

    def XQ(q):
        return (a.phi(step, q) - a.phi(-step, q)) / (2 * step)

    return Generator(XQ, a.dim)


def generator_of(a: OneParamAction) -> Generator:
    """Analytic generator when supplied, otherwise the finite-difference one."""
    if a.generator is not None:
        return Generator(a.generator, a.dim)
    return generator_eval(a)
