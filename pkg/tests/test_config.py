#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Test parsing and validation of run configurations.
"""

# Stdlib:
import math
import textwrap

# External:
import numpy as np
import pytest

# Internal:
from ksnslab.config import (
    RunConfig, parse_config, parse_profile, parse_text, potential_profile,
    scalar_profile, velocity_profile,
)
from ksnslab.errors import ConfigError
from ksnslab.norms import DecayRates, x_norm
from ksnslab.operators import ScalarField, build_grid, is_solenoidal
from ksnslab.persist import write_snapshot


def ini(text):
    return textwrap.dedent(text).lstrip()


@pytest.mark.unittest
def test_defaults():
    """An empty file yields every documented default"""
    config = parse_text("")
    assert config.get("grid", "nx") == 32
    assert config.get("exponents", "s") == math.inf
    assert config.get("run", "snapshot_times") == ()
    assert config.exponents().q == 1.5
    assert config.grid().size == 32 * 32
    assert config.model_params(config.grid()).theorem == "T1"


@pytest.mark.unittest
def test_dump_round_trip():
    """The dumped text parses back into the same values"""
    config = parse_text(ini("""
        [grid]
        nx = 16
        [run]
        snapshot_times = 0.1, 0.5
        record_timings = yes
    """))
    again = parse_text(config.dump())
    assert again.cfg == config.cfg
    assert again.get("run", "snapshot_times") == (0.1, 0.5)
    assert again.get("run", "record_timings") is True


@pytest.mark.unittest
def test_unknown_key_reports_line():
    """Unknown keys are rejected with file and line"""
    text = ini("""
        [grid]
        nx = 8
        foo = 1
    """)
    with pytest.raises(ConfigError, match=r"run\.ini:3: unknown key 'foo' in \[grid\]"):
        parse_text(text, source="run.ini")


@pytest.mark.unittest
def test_unknown_section():
    """Unknown sections are rejected"""
    with pytest.raises(ConfigError, match=r":1: unknown section \[plot\]"):
        parse_text("[plot]\ncolor = red\n")


@pytest.mark.unittest
@pytest.mark.parametrize("text, message", [
    ("[model]\nbeta1 = -1\n", "beta1 must be positive"),
    ("[model]\nkappa1 = 2\n", "kappa1: switch must be 0 or 1"),
    ("[grid]\nnx = many\n", "invalid value for grid.nx"),
    ("[grid]\nnx = 8.5\n", "invalid value for grid.nx"),
    ("[exponents]\nq = 0.5\n", "Exponent q"),
    ("[run]\ntheorem = T7\n", "theorem must be T1 or T2"),
    ("[data]\nn0 = wave\n", None),
    ("[data]\nphi = gravity gz=1\n", "unknown arguments: gz"),
    ("[grid\nnx = 8\n", None),
])
def test_invalid_values(text, message):
    """Bad values surface as ConfigError"""
    with pytest.raises(ConfigError) as err:
        config = parse_text(text)
        config.initial_data(config.grid())

    if message is not None:
        assert message in str(err.value)


@pytest.mark.unittest
def test_t2_defaults_to_pure_decay():
    """Theorem-2 runs drop the logistic term unless mu is given"""
    config = parse_text("[run]\ntheorem = T2\ncase = ii\n[model]\nsigma = -0.5\n")
    params = config.model_params(config.grid())
    assert params.mu == 0.0
    assert params.long_horizon

    with pytest.raises(ConfigError):
        parse_text("[run]\ntheorem = T2\n[model]\nmu = 1\n")


@pytest.mark.unittest
def test_model_errors_report_line():
    """Rejected model parameters point at the line of their key"""
    text = ini("""
        [model]
        chi = 1
        beta1 = -1
    """)
    with pytest.raises(ConfigError, match=r"run\.ini:3: beta1 must be positive"):
        parse_text(text, source="run.ini")

    text = ini("""
        [run]
        theorem = T2
        [model]
        mu = 1
    """)
    with pytest.raises(ConfigError, match=r"run\.ini:4: Theorem-2 mode needs mu = 0"):
        parse_text(text, source="run.ini")

    text = ini("""
        [run]
        theorem = T2
        [model]
        chi = 2
        sigma = 0.5
    """)
    with pytest.raises(ConfigError, match=r"run\.ini:5: Theorem-2 mode"):
        parse_text(text, source="run.ini")


@pytest.mark.unittest
def test_long_horizon():
    """Decaying runs without an explicit T sample up to 20 over the slowest rate"""
    config = parse_text("[run]\ntheorem = T2\ncase = ii\n[model]\nsigma = -0.5\n")
    rates = DecayRates(sigma_tilde=0.5, kappa_beta1=1.0, beta2=1.0, rho2=30.0)
    horizon = config.horizon(rates)
    assert horizon == pytest.approx(40.0)
    assert config.exponents(horizon).T == pytest.approx(40.0)
    assert config.time_grid(horizon)[-1] == pytest.approx(40.0)

    assert config.horizon() == 1.0
    assert config.horizon(DecayRates(0.0, 1.0, 1.0, 1.0)) == 1.0

    explicit = parse_text("[exponents]\nT = 3\n[run]\ntheorem = T2\n[model]\nsigma = -0.5\n")
    assert explicit.horizon(rates) == 3.0
    assert explicit.with_overrides(refine=2).horizon(rates) == 3.0


@pytest.mark.unittest
def test_missing_file(tmp_path):
    """An unreadable config is a config error"""
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "absent.ini"))

    path = tmp_path / "run.ini"
    path.write_text("[grid]\nnx = 8\nny = 8\n")
    assert parse_config(str(path)).grid().nx == 8


@pytest.mark.unittest
def test_overrides():
    """Refinement multiplies cells and samples, the seed is replaced"""
    config = parse_text("[grid]\nnx = 8\nny = 6\n[solver]\nn_log = 10\nn_lin = 5\n")
    refined = config.with_overrides(seed=7, refine=2)
    assert refined.grid().shape == (12, 16)
    assert len(refined.time_grid()) == 30
    assert refined.get("run", "seed") == 7
    assert config.get("grid", "nx") == 8


@pytest.mark.unittest
def test_profiles(tiny_grid):
    """Named profiles build the expected fields"""
    assert parse_profile("gaussian x0=0.2 width=0.05") == (
        "gaussian", {"x0": "0.2", "width": "0.05"}
    )

    bump = scalar_profile(tiny_grid, "gaussian amplitude=2")
    assert np.max(bump.values) <= 2.0
    assert np.argmax(bump.values) in (27, 28, 35, 36)

    wave = scalar_profile(tiny_grid, "cosine j=1 k=0")
    assert abs(wave.mean()) < 1e-12
    assert scalar_profile(tiny_grid, "constant value=3").values[0] == 3.0

    vortex = velocity_profile(tiny_grid, "vortex amplitude=0.5")
    assert is_solenoidal(vortex)
    assert np.max(np.abs(vortex.stacked())) > 0

    gravity = potential_profile(tiny_grid, "gravity gx=0 gy=-2")
    assert np.allclose(gravity.y.array()[:-1], -2.0)
    assert np.allclose(gravity.x.values, 0.0)

    with pytest.raises(ConfigError):
        scalar_profile(tiny_grid, "gaussian x0")

    with pytest.raises(ConfigError):
        velocity_profile(tiny_grid, "tornado")

    with pytest.raises(ConfigError):
        potential_profile(tiny_grid, "")


@pytest.mark.unittest
def test_snapshot_profiles(tmp_path, tiny_grid):
    """Snapshots load on their own grid and kind only"""
    field = ScalarField.from_function(tiny_grid, lambda xs, ys: xs * ys)
    path = str(tmp_path / "n0.cnsm")
    write_snapshot(path, field)

    loaded = scalar_profile(tiny_grid, "snapshot path=" + path)
    assert np.array_equal(loaded.values, field.values)

    with pytest.raises(ConfigError):
        scalar_profile(build_grid(1.0, 1.0, 8, 4), "snapshot path=" + path)

    with pytest.raises(ConfigError):
        velocity_profile(tiny_grid, "snapshot path=" + path)

    with pytest.raises(ConfigError, match="snapshot file not found"):
        parse_text("[data]\nn0 = snapshot path={}\n".format(tmp_path / "gone.cnsm"))


@pytest.mark.unittest
def test_normalized_amplitude(engines, tiny_grid):
    """With normalize the amplitude is the X norm of the data"""
    config = parse_text(ini("""
        [grid]
        nx = 8
        ny = 8
        [data]
        amplitude = 0.3
        normalize = true
        v0 = cosine
    """))
    data = config.initial_data(tiny_grid, engines.heat)
    assert x_norm(data, config.exponents(), engines.heat) == pytest.approx(0.3)

    with pytest.raises(ConfigError):
        config.initial_data(tiny_grid)
