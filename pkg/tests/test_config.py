import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socp.config import KEYS, RunConfig, load_config, parse_config
from socp.errors import ConfigError


def test_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.build().name == "double_integrator"


def test_full_configuration():
    text = """
    # low-thrust transfer
    problem = low_thrust
    formulation = newlag
    T = 1.5
    N = 120
    q0 = 1.0, 0.0
    v0 = 0.0, 1.0
    qT = 1.05, 1.2   # target
    vT = 0.1, 0.95
    terminal_mode = free
    tol_shoot = 1e-9
    tol_newton = 1e-13
    params.m = 2.0
    """
    cfg = parse_config(text)
    assert (cfg.problem, cfg.formulation, cfg.N) == ("low_thrust", "newlag", 120)
    assert cfg.tol_shoot == 1e-9 and cfg.tol_newton == 1e-13
    p = cfg.build()
    assert p.boundary.T == 1.5 and p.boundary.terminal == "free"
    np.testing.assert_array_equal(p.boundary.qT, [1.05, 1.2])
    assert p.params["m"] == 2.0
    assert p.mayer is not None


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="'foo'"):
        parse_config("foo = 1")


def test_unknown_parameter_is_named():
    with pytest.raises(ConfigError, match="params.bogus"):
        parse_config("problem = low_thrust\nparams.bogus = 1")


@pytest.mark.parametrize("text", ["problem = moon_landing", "formulation = hamilton_jacobi", "N = 1",
                                  "N = many", "T = soon", "q0 = 1, x", "terminal_mode = open", "q0 = ",
                                  "this line has no delimiter"])
def test_invalid_values(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_forced_needs_lagrangian():
    cfg = parse_config("problem = scalar_regular\nformulation = forced")
    with pytest.raises(ConfigError, match="forced"):
        cfg.build()


def test_boundary_dimension_mismatch_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("problem = low_thrust\nq0 = 1, 2, 3").build()


def test_load_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("problem = rot_oscillator\nparams.omega = 2.0\n")
    cfg = load_config(path)
    assert cfg.build().params["omega"] == 2.0
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


def test_keys_are_case_sensitive():
    with pytest.raises(ConfigError, match="'t'"):
        parse_config("t = 1.0")
    assert "T" in KEYS


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5.0), st.integers(2, 10_000))
def test_numbers_round_trip(T, N):
    cfg = parse_config(f"T = {T!r}\nN = {N}")
    assert cfg.N == N
    assert cfg.overrides["T"] == T
