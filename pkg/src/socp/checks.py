"""Invariant suites driven by ``socp check``.

Each suite returns a list of :class:`CheckResult`; a suite passes when all
of its results pass.  Sample points come from a seeded generator.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import tulczyjew as tz
from .bvp_solver import solve_bvp
from .conserved import energy_monitor, generating_checks, noether_newlag, noether_pmp, symmetry_residual
from .errors import ConfigError
from .formulations import NewLagPoint, classify_ocp_regularity, hyperregularity_certificate
from .group_actions import polynomial_flow, rotation
from .ocp_model import OcpProblem, sample_points
from .optimality import field_with_control
from .registry import PROBLEMS, SYMMETRIES, get_action, get_problem

DYNAMIC = ("double_integrator", "low_thrust", "rot_oscillator")
SCALAR_VERDICTS = {"scalar_singular": "singular", "scalar_regular": "regular",
                   "scalar_superregular": "superregular"}


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    value: float
    tol: float
    passed: bool
    note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _r(suite, name, value, tol, note="") -> CheckResult:
    value = float(value)
    return CheckResult(suite, name, value, tol, bool(value <= tol), note)


def _flag(suite, name, ok: bool, note="") -> CheckResult:
    return CheckResult(suite, name, 0.0 if ok else 1.0, 0.0, bool(ok), note)


def _problems(problem: str | None, default) -> list[OcpProblem]:
    return [get_problem(problem)] if problem else [get_problem(n) for n in default]


# -- suites ---------------------------------------------------------------------------

def tulczyjew_suite(problem: str | None = None, seed: int = 42, n: int = 100) -> list[CheckResult]:
    s = "tulczyjew"
    out = []
    rng = np.random.default_rng(seed)
    for dq, du in ((1, 0), (1, 1), (2, 1)):
        worst = 0.0
        for _ in range(20):
            c = rng.normal(size=4 * dq + du)
            pt = tz.TwistedPoint("TT*Q+E", c, dq, du)
            worst = max(worst, np.max(np.abs(tz.alpha_inv(tz.alpha(pt)).coords - c)),
                        np.max(np.abs(tz.beta_inv(tz.beta(pt)).coords - c)))
            k = tz.TwistedPoint("TTQ+E", c, dq, du)
            worst = max(worst, np.max(np.abs(tz.kappa(tz.kappa(k)).coords - c)))
        out.append(_r(s, f"round trips dim_q={dq} dim_u={du}", worst, 0.0))
        ea, eb = tz.pullback_residuals(dq, du, seed=seed)
        out.append(_r(s, f"alpha pullback dim_q={dq} dim_u={du}", ea, 1e-10))
        out.append(_r(s, f"beta pullback dim_q={dq} dim_u={du}", eb, 1e-10))
    pts = [tz.TwistedPoint("TT*Q+E", rng.uniform(-0.4, 0.4, 8), 2, 0) for _ in range(10)]
    for action in (rotation(), polynomial_flow()):
        ea, eb = tz.equivariance_residual(action, pts)
        out.append(_r(s, f"alpha/beta equivariance {action.name}", max(ea, eb), 1e-8))
    for p in _problems(problem, list(PROBLEMS)):
        rep = tz.composition_residuals(p, n=n, seed=seed)
        out.append(_r(s, f"composition {p.name}", rep.max, 1e-12))
        if p.lagrangian is not None:
            out += _forced_maps(p, seed)
        if p.name in DYNAMIC:
            out += _geometric(p, seed)
    return out


def _forced_maps(p: OcpProblem, seed: int) -> list[CheckResult]:
    s = "tulczyjew"
    qs, vs, a1, a2, us = sample_points(p, 20, np.random.default_rng(seed))
    flat = chi = 0.0
    for q, v, x, y, u in zip(qs, vs, a1, a2, us):
        pt = tz.make_point("TTQ+E", q, v, x, y, u=u)
        flat = max(flat, np.max(np.abs(tz.musical_sharp(p, tz.musical_flat(p, pt)).coords - pt.coords)))
        img = tz.make_point("T*TQ+L", q, x, y, v, u=u)
        chi = max(chi, np.max(np.abs(tz.chi_tilde1_inv(p, tz.chi_tilde1(p, img)).coords - img.coords)))
    return [_r(s, f"sharp o flat {p.name}", flat, 1e-12), _r(s, f"chi round trip {p.name}", chi, 1e-10)]


def _geometric(p: OcpProblem, seed: int, n: int = 3) -> list[CheckResult]:
    """``i_X w = dH`` for the PMP field and the new-Lagrangian field, plus closedness."""
    s = "tulczyjew"
    qs, vs, a1, a2, _ = sample_points(p, n, np.random.default_rng(seed))
    m = p.dim_q
    e_pmp = e_lag = e_closed = 0.0
    for q, v, x, y in zip(qs, vs, a1, a2):
        state = np.concatenate([q, v, x, y])
        fv = field_with_control(p, "pmp", state)
        pt = tz.TwistedPoint("T*TQ+E", np.concatenate([state, fv.u]), m, p.dim_u)
        e_pmp = max(e_pmp, tz.geometric_residual(tz.presymplectic_form("T*TQ+E", m), fv.dx,
                                                 tz.pmp_differential(p, pt)))
        lag_state = np.concatenate([q, x, v, y])
        fv = field_with_control(p, "newlag", lag_state)
        pt = tz.TwistedPoint("TT*Q+E", np.concatenate([lag_state, fv.u]), m, p.dim_u)
        e_lag = max(e_lag, tz.geometric_residual(tz.lagrangian_form(p, pt), fv.dx, tz.energy_differential(p, pt)))
        e_closed = max(e_closed, tz.closedness_residual(p, pt))
    return [_r(s, f"pmp field i_X w = dH {p.name}", e_pmp, 1e-10),
            _r(s, f"new Lagrangian field i_X w = dE {p.name}", e_lag, 1e-8),
            _r(s, f"w_L - w_alpha closed {p.name}", e_closed, 1e-6)]


def hyperregularity_suite(problem: str | None = None, seed: int = 42, n: int = 100) -> list[CheckResult]:
    s = "hyperregularity"
    out = []
    for p in _problems(problem, DYNAMIC):
        qs, vs, a1, a2, us = sample_points(p, n, np.random.default_rng(seed))
        rep = hyperregularity_certificate(p, [NewLagPoint(*z) for z in zip(qs, a1, vs, a2, us)])
        note = (f"computed sign {rep.sign:+d}, commonly quoted sign {rep.claimed_sign:+d}"
                + ("" if rep.sign_matches_claim else " (mismatch, recorded only)"))
        out.append(_flag(s, f"|det| = 1 {p.name}", rep.abs_is_one, note))
        out.append(_flag(s, f"det point independent {p.name}", rep.point_independent, note))
    return out


def regularity_suite(problem: str | None = None, seed: int = 42, n: int = 100) -> list[CheckResult]:
    s = "regularity"
    names = [problem] if problem else list(SCALAR_VERDICTS)
    out = []
    for name in names:
        if name not in SCALAR_VERDICTS:
            raise ConfigError(f"the regularity suite covers {', '.join(SCALAR_VERDICTS)}; got {name!r}")
        verdict = classify_ocp_regularity(get_problem(name), n=n, seed=seed).verdict
        out.append(_flag(s, f"{name} is {SCALAR_VERDICTS[name]}", verdict == SCALAR_VERDICTS[name],
                         f"classified as {verdict}"))
    return out


def equivariance_suite(problem: str | None = None, seed: int = 42, n: int = 20) -> list[CheckResult]:
    s = "equivariance"
    out = []
    pairs = [(problem, a) for a in SYMMETRIES.get(problem, ())] if problem else [
        (name, a) for name, acts in SYMMETRIES.items() for a in acts]
    if problem and not pairs:
        raise ConfigError(f"problem {problem!r} has no registered symmetry")
    for name, act in pairs:
        res = symmetry_residual(get_problem(name), get_action(act), n=n, seed=seed)
        out.append(_r(s, f"{name} invariant under {act}", res, 1e-9))
    rng = np.random.default_rng(seed)
    pts = [tz.TwistedPoint("TT*Q+E", rng.uniform(-0.4, 0.4, 8), 2, 0) for _ in range(n)]
    for action in (rotation(), polynomial_flow()):
        ea, eb = tz.equivariance_residual(action, pts)
        out.append(_r(s, f"alpha commutes with lifted {action.name}", ea, 1e-8))
        out.append(_r(s, f"beta commutes with lifted {action.name}", eb, 1e-8))
    return out


def noether_suite(problem: str | None = None, seed: int = 42, N: int = 200) -> list[CheckResult]:
    s = "noether"
    name = problem or "low_thrust"
    if name not in SYMMETRIES:
        raise ConfigError(f"problem {name!r} has no registered symmetry")
    p = get_problem(name)
    rep = solve_bvp(p, "pmp", N=N, coarse_grid=25)
    if not rep.converged:
        return [_flag(s, f"{name} solve converged", False, rep.message)]
    out = [_r(s, f"{name} energy drift", energy_monitor(rep.trajectory, p).drift, 1e-8)]
    for act in SYMMETRIES[name]:
        a = get_action(act)
        I = noether_pmp(rep.trajectory, a, p)
        IL = noether_newlag(rep.trajectory, a, p, check=False)
        out.append(_r(s, f"{name} {act} momentum drift", I.drift, 1e-8))
        out.append(_r(s, f"{name} {act} pmp vs new-Lagrangian momentum", np.max(np.abs(I.values - IL.values)), 1e-8))
    return out


def generating_suite(problem: str | None = None, seed: int = 42) -> list[CheckResult]:
    s = "generating"
    p = get_problem(problem or "double_integrator")
    rep = generating_checks(p)
    out = [_r(s, f"{p.name} {k}", v, 1e-3, "finite-difference limited") for k, v in rep.derivative_residuals.items()]
    out.append(_r(s, f"{p.name} mixed-kind relation", rep.mixed_relation, 1e-8))
    out.append(_r(s, f"{p.name} bracket identity", rep.bracket_residual, 1e-3))
    return out


SUITES: dict[str, Callable[..., list[CheckResult]]] = {
    "tulczyjew": tulczyjew_suite,
    "hyperregularity": hyperregularity_suite,
    "regularity": regularity_suite,
    "equivariance": equivariance_suite,
    "noether": noether_suite,
    "generating": generating_suite,
}


def run_suite(name: str, problem: str | None = None, seed: int = 42) -> list[CheckResult]:
    try:
        suite = SUITES[name]
    except KeyError:
        raise ConfigError(f"unknown suite {name!r}; known: {', '.join(SUITES)}") from None
    return suite(problem=problem, seed=seed)
