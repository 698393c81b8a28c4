"""``socp`` command line: list, solve, compare and check.

Exit codes: 0 success, 1 configuration error, 2 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bvp_solver import augmented_cost, solve_bvp, write_trace_csv
from .checks import SUITES, run_suite
from .config import RunConfig, load_config
from .conserved import MonitorSeries, energy_monitor, hamiltonian_monitor, noether_pmp
from .errors import ConfigError, SocpError
from .optimality import identify
from .registry import ACTIONS, FORMULATIONS, PROBLEMS, SYMMETRIES, get_action, get_problem

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2
COARSE_GRID = 25
COARSE_MIN_N = 100


# -- helpers ------------------------------------------------------------------------------

def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "problem", None):
        if args.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {args.problem!r}; known: {', '.join(PROBLEMS)}")
        if args.problem != cfg.problem:
            cfg = replace(cfg, problem=args.problem, overrides={})
    if getattr(args, "formulation", None):
        if args.formulation not in FORMULATIONS:
            raise ConfigError(f"unknown formulation {args.formulation!r}")
        cfg = replace(cfg, formulation=args.formulation)
    if getattr(args, "tol", None) is not None:
        if args.tol <= 0:
            raise ConfigError("--tol must be positive")
        cfg = replace(cfg, tol_shoot=args.tol)
    return cfg


def monitors_for(p, traj) -> dict[str, MonitorSeries]:
    """E, H and the registered Noether momenta along a complete trace."""
    out = {"E": energy_monitor(traj, p), "H": hamiltonian_monitor(traj, p)}
    for act in SYMMETRIES.get(p.name, ()):
        out[f"I_{act}"] = noether_pmp(traj, get_action(act), p, check=False)
    return out


def solve_job(cfg: RunConfig, N: int) -> dict:
    """Solve one configuration; returns the report plus the raw trace (picklable)."""
    p = cfg.build()
    rep = solve_bvp(p, cfg.formulation, N=N, tol=cfg.tol_shoot,
                    coarse_grid=COARSE_GRID if N >= COARSE_MIN_N else None)
    traj = rep.trajectory
    monitors: dict[str, np.ndarray] = {}
    drifts: dict[str, float | None] = {}
    cost = float("nan")
    if traj is not None and traj.complete:
        for name, series in monitors_for(p, traj).items():
            monitors[name] = series.values
            drifts[name] = _finite(series.drift)
        cost = augmented_cost(p, traj)
    report = {
        "problem": cfg.problem,
        "formulation": cfg.formulation,
        "converged": bool(rep.converged),
        "iterations": int(rep.iterations),
        "residual": _finite(rep.residual),
        "cost": _finite(cost),
        "drifts": drifts,
        "seed": None,
        "grid": int(N),
    }
    return {"report": report, "trajectory": traj, "monitors": monitors, "message": rep.message}


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*items)))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


# -- subcommands ------------------------------------------------------------------------------

def cmd_list(args) -> int:
    if args.formulations:
        print("\n".join(FORMULATIONS))
    elif args.actions:
        print("\n".join(ACTIONS))
    else:
        for name in PROBLEMS:
            print(f"{name}\t{get_problem(name).description}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _run_config(args)
    N = args.grid if args.grid is not None else cfg.N
    if N < 2:
        raise ConfigError("--grid must be at least 2")
    res = solve_job(cfg, N)
    res["report"]["seed"] = args.seed
    out = _out_dir(args)
    stem = f"{cfg.problem}_{cfg.formulation}"
    p = cfg.build()
    if res["trajectory"] is not None:
        write_trace_csv(out / f"{stem}_trace.csv", p, res["trajectory"], res["monitors"])
    _write_json(out / f"{stem}_report.json", res["report"])
    r = res["report"]
    print(f"{stem}: {res['message']}, iterations {r['iterations']}, residual {r['residual']}, cost {r['cost']}")
    return EXIT_OK if r["converged"] else EXIT_NONCONVERGED


def _parse_list(text: str, label: str) -> list[str]:
    items = [s for s in text.replace(" ", "").split(",") if s]
    if not items:
        raise ConfigError(f"{label} is empty")
    return items


def cmd_compare(args) -> int:
    cfg = _run_config(args)
    forms = _parse_list(args.formulations, "--formulations")
    for f in forms:
        if f not in FORMULATIONS:
            raise ConfigError(f"unknown formulation {f!r}")
    grids = [cfg.N] if args.grid is None else [int(g) for g in _parse_list(args.grid, "--grid")]
    if len(set(grids)) > 1:
        raise ConfigError(f"compare needs one common grid for all formulations, got {sorted(set(grids))}")
    N = grids[0]
    p = cfg.build()
    if "forced" in forms and p.lagrangian is None:
        raise ConfigError(f"formulation 'forced' needs a Lagrangian; {cfg.problem} has none")
    results = _map(solve_job, [(replace(cfg, formulation=f), N) for f in forms], args.jobs)
    by_form = dict(zip(forms, results))
    # every trace is carried to the pmp chart before comparing
    pmp_traces = {}
    for f, res in by_form.items():
        traj = res["trajectory"]
        if res["report"]["converged"] and traj is not None and traj.complete:
            pmp_traces[f] = np.array([identify(x, f, "pmp", p, u) for x, u in zip(traj.states, traj.controls)])
    pairs = []
    for i, a in enumerate(forms):
        for b in forms[i + 1:]:
            row = {"a": a, "b": b, "comparable": a in pmp_traces and b in pmp_traces}
            if row["comparable"]:
                row["max_state_deviation"] = float(np.max(np.abs(pmp_traces[a] - pmp_traces[b])))
                row["cost_deviation"] = _finite(abs(by_form[a]["report"]["cost"] - by_form[b]["report"]["cost"]))
            pairs.append(row)
    summary = {"problem": cfg.problem, "grid": N, "seed": args.seed,
               "solves": [r["report"] for r in results], "pairs": pairs}
    _write_json(_out_dir(args) / f"{cfg.problem}_compare.json", summary)
    for row in pairs:
        if row["comparable"]:
            print(f"{row['a']:>7} vs {row['b']:<7} state {row['max_state_deviation']:.3e}  cost {row['cost_deviation']:.3e}")
        else:
            print(f"{row['a']:>7} vs {row['b']:<7} incomparable (non-convergence)")
    return EXIT_OK if len(pmp_traces) == len(forms) else EXIT_NONCONVERGED


def cmd_check(args) -> int:
    names = list(SUITES) if args.suite == "all" else _parse_list(args.suite, "--suite")
    for n in names:
        if n not in SUITES:
            raise ConfigError(f"unknown suite {n!r}; known: {', '.join(SUITES)}")
    outcome = _map(run_suite, [(n, args.problem, args.seed) for n in names], args.jobs)
    ok = True
    rows = []
    for results in outcome:
        for r in results:
            ok = ok and r.passed
            rows.append(r.as_dict())
            note = f"  [{r.note}]" if r.note else ""
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite:<15} {r.name}: {r.value:.3e} (tol {r.tol:.0e}){note}")
    if args.out:
        _write_json(_out_dir(args) / "check_report.json", {"seed": args.seed, "passed": ok, "results": rows})
    return EXIT_OK if ok else EXIT_NONCONVERGED


# -- parser --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socp", description="Optimal control problems in four equivalent formulations")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--problem", help="registry problem id")
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=42, help="seed for sampled checks (default 42)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent solves/checks")

    p_list = sub.add_parser("list", help="list problems, formulations or actions")
    g = p_list.add_mutually_exclusive_group()
    g.add_argument("--formulations", action="store_true")
    g.add_argument("--actions", action="store_true")
    p_list.set_defaults(func=cmd_list)

    p_solve = sub.add_parser("solve", parents=[common], help="solve the boundary value problem in one chart")
    p_solve.add_argument("--formulation", help="pmp, newlag, newham or forced")
    p_solve.add_argument("--grid", type=int, help="number of RK4 steps")
    p_solve.add_argument("--tol", type=float, help="shooting tolerance")
    p_solve.set_defaults(func=cmd_solve)

    p_cmp = sub.add_parser("compare", parents=[common], help="solve in several charts and compare after identification")
    p_cmp.add_argument("--formulations", default="pmp,newlag,newham", help="comma separated list")
    p_cmp.add_argument("--grid", help="number of RK4 steps (one value shared by all charts)")
    p_cmp.add_argument("--tol", type=float, help="shooting tolerance")
    p_cmp.set_defaults(func=cmd_compare, formulation=None)

    p_chk = sub.add_parser("check", parents=[common], help="run invariant suites")
    p_chk.add_argument("--suite", default="all", help=f"one of {', '.join(SUITES)}, a comma list, or all")
    p_chk.set_defaults(func=cmd_check, out=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SocpError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
