"""Plain-text run configuration (``key = value`` per line, ``#`` comments).

Recognised keys: problem, formulation, T, N, q0, v0, qT, vT, terminal_mode,
params.<name>, tol_newton, tol_shoot.  Vectors are comma separated.
"""
from __future__ import annotations

import configparser
import inspect
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ocp_model import OcpProblem
from .registry import FORMULATIONS, PROBLEMS, get_problem

KEYS = ("problem", "formulation", "T", "N", "q0", "v0", "qT", "vT", "terminal_mode", "tol_newton", "tol_shoot")
BOUNDARY_KEYS = ("T", "q0", "v0", "qT", "vT")


@dataclass
class RunConfig:
    problem: str = "double_integrator"
    formulation: str = "pmp"
    N: int = 200
    tol_newton: float = 1e-12
    tol_shoot: float = 1e-8
    overrides: dict = field(default_factory=dict)  # keyword arguments for the problem factory

    def build(self) -> OcpProblem:
        p = get_problem(self.problem, **self.overrides)
        if self.formulation == "forced" and p.lagrangian is None:
            raise ConfigError(f"formulation 'forced' needs a Lagrangian; {self.problem} has none")
        return p


def _vector(key: str, text: str):
    try:
        vals = [float(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {text!r} as numbers") from None
    if not vals:
        raise ConfigError(f"key {key!r}: empty value")
    return vals[0] if len(vals) == 1 else tuple(vals)


def _number(key: str, text: str, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {text!r}") from None


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # keys are case sensitive (T vs t)
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    raw = dict(parser["run"])
    cfg = RunConfig()
    factory_kw: dict = {}
    for key, value in raw.items():
        if key.startswith("params."):
            factory_kw[key[len("params."):]] = _number(key, value)
        elif key not in KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        elif key == "problem":
            if value not in PROBLEMS:
                raise ConfigError(f"key 'problem': unknown problem {value!r}")
            cfg.problem = value
        elif key == "formulation":
            if value not in FORMULATIONS:
                raise ConfigError(f"key 'formulation': unknown formulation {value!r}")
            cfg.formulation = value
        elif key == "N":
            cfg.N = _number(key, value, int)
            if cfg.N < 2:
                raise ConfigError("key 'N' must be at least 2")
        elif key in ("tol_newton", "tol_shoot"):
            setattr(cfg, key, _number(key, value))
        elif key == "terminal_mode":
            if value not in ("fixed", "free"):
                raise ConfigError(f"key 'terminal_mode' must be fixed or free, got {value!r}")
            factory_kw["terminal"] = value
        else:
            factory_kw[key] = _number(key, value) if key == "T" else _vector(key, value)
    accepted = inspect.signature(PROBLEMS[cfg.problem]).parameters
    if not any(p.kind is p.VAR_KEYWORD for p in accepted.values()):
        for name in factory_kw:
            if name not in accepted:
                label = name if name in BOUNDARY_KEYS or name == "terminal" else f"params.{name}"
                raise ConfigError(f"key {label!r} is not a parameter of {cfg.problem}")
    cfg.overrides = factory_kw
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)
