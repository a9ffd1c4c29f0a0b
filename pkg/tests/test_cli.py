#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Test the command line front end end to end on tiny problems.
"""

# Stdlib:
import os
import textwrap

# External:
import pytest

# Internal:
from ksnslab.cli import COMMANDS, build_parser, main
from ksnslab.errors import ALL_ERRORS
from ksnslab.persist import read_rows, read_snapshot


TINY = """
[grid]
nx = 8
ny = 8
[exponents]
T = 0.2
[solver]
n_log = 8
n_lin = 6
[data]
n0 = zero
phi = zero
"""


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text).lstrip())
    return str(path)


def verdict(out_dir):
    with open(os.path.join(out_dir, "verdict.txt")) as handle:
        return handle.read()


@pytest.mark.unittest
def test_parser_knows_every_command():
    """Every subcommand accepts the common flags"""
    parser = build_parser()
    for name in COMMANDS:
        args = parser.parse_args([name, "--out", "x", "--seed", "3", "--refine", "2"])
        assert (args.command, args.out, args.seed, args.refine) == (name, "x", 3, 2)

    with pytest.raises(SystemExit):
        parser.parse_args(["plot"])


@pytest.mark.unittest
def test_exit_codes_are_unique():
    """No two error categories share an exit code"""
    codes = [err.exit_code for err in ALL_ERRORS]
    assert len(set(codes)) == len(codes)
    assert 0 not in codes


@pytest.mark.unittest
def test_check_exponents_pass(tmp_path, out_dir):
    """An admissible tuple exits 0 with a PASS verdict"""
    config = write_config(tmp_path, """
        [exponents]
        q = 2
        p = 4
        r = 4
        [run]
        theorem = T2
        case = ii
    """)
    assert main(["check-exponents", "--config", config, "--out", out_dir]) == 0
    assert verdict(out_dir).startswith("T2 case (ii): PASS")


@pytest.mark.unittest
def test_check_exponents_fail(tmp_path, out_dir):
    """An inadmissible tuple exits with the verification code"""
    config = write_config(tmp_path, """
        [exponents]
        q = 1
        [run]
        case = iii
    """)
    assert main(["check-exponents", "--config", config, "--out", out_dir]) == 13
    assert verdict(out_dir).startswith("T1 case (iii): FAIL")


@pytest.mark.unittest
def test_simulate_zero_data(tmp_path, out_dir, engine_cache):
    """Zero data converge at once and every norm vanishes"""
    config = write_config(tmp_path, TINY + "[run]\nsnapshot_times = 0.1\n")
    assert main(["simulate", "--config", config, "--out", out_dir]) == 0

    norms = read_rows(os.path.join(out_dir, "norms.csv"))
    assert len(norms) == 4 * 14
    assert all(float(row["weighted_norm"]) == 0.0 for row in norms)
    assert [row["component"] for row in norms[:4]] == ["n", "c", "v", "u"]

    diag = read_rows(os.path.join(out_dir, "diagnostics.csv"))
    assert len(diag) == 1
    assert diag[0]["iter"] == "1"
    assert diag[0]["ratio"] == ""

    assert verdict(out_dir).startswith("CONVERGED iterations=1")

    snaps = sorted(name for name in os.listdir(out_dir) if name.endswith(".cnsm"))
    assert len(snaps) == 4
    assert read_snapshot(os.path.join(out_dir, snaps[0])).grid.nx == 8


@pytest.mark.unittest
def test_simulate_long_horizon(tmp_path, out_dir, engine_cache):
    """Pure-decay runs without T are sampled up to 20 over the slowest rate"""
    text = TINY.replace("T = 0.2\n", "") + (
        "[run]\ntheorem = T2\ncase = ii\n[model]\nsigma = -0.5\n"
    )
    config = write_config(tmp_path, text)
    assert main(["simulate", "--config", config, "--out", out_dir]) == 0

    norms = read_rows(os.path.join(out_dir, "norms.csv"))
    assert float(norms[-1]["t"]) == pytest.approx(40.0)
    assert "yexp_norm=0 growing=False" in verdict(out_dir)


def y_norm_of(out_dir):
    first = verdict(out_dir).splitlines()[0]
    return float(first.split("y_norm=")[1])


@pytest.mark.slow
def test_refinement_keeps_norms(tmp_path, engine_cache):
    """Doubling cells and samples changes the Y norm by under five percent"""
    text = TINY.replace("n0 = zero", "n0 = cosine amplitude=0.05")
    text = text.replace("n_log = 8\nn_lin = 6", "n_log = 16\nn_lin = 12")
    config = write_config(tmp_path, text)

    norms = []
    for refine in ("1", "2"):
        out = str(tmp_path / ("refine" + refine))
        assert main(["simulate", "--config", config, "--out", out, "--refine", refine]) == 0
        norms.append(y_norm_of(out))

    assert norms[0] > 0
    assert norms[1] == pytest.approx(norms[0], rel=0.05)


@pytest.mark.slow
def test_simulate_is_deterministic(tmp_path, engine_cache):
    """Two runs with the same config write identical tables"""
    config = write_config(tmp_path, TINY.replace("n0 = zero", "n0 = gaussian amplitude=0.05"))
    outputs = [str(tmp_path / "first"), str(tmp_path / "second")]
    for out in outputs:
        assert main(["simulate", "--config", config, "--out", out]) == 0

    for name in ("norms.csv", "verdict.txt"):
        with open(os.path.join(outputs[0], name), "rb") as left, \
                open(os.path.join(outputs[1], name), "rb") as right:
            assert left.read() == right.read()


@pytest.mark.unittest
def test_verify_beta(tmp_path, out_dir):
    """Every grid point satisfies the beta bound"""
    config = write_config(tmp_path, "[verify]\nbeta_points = 200\n")
    assert main(["verify-beta", "--config", config, "--out", out_dir]) == 0

    rows = read_rows(os.path.join(out_dir, "beta.csv"))
    assert len(rows) == 200
    assert all(row["passed"] == "true" for row in rows)
    assert verdict(out_dir).startswith("beta PASS 200/200")


@pytest.mark.unittest
def test_verify_decay(tmp_path, out_dir, engine_cache):
    """The L2 envelope is stable between 8 and 16 cells"""
    config = write_config(tmp_path, """
        [grid]
        nx = 8
        ny = 8
        [solver]
        n_log = 8
        n_lin = 6
        [verify]
        estimate = C0
        p = 2
        q = 2
    """)
    assert main(["verify-decay", "--config", config, "--out", out_dir]) == 0
    assert verdict(out_dir).startswith("C0 PASS")

    rows = read_rows(os.path.join(out_dir, "decay.csv"))
    assert {row["nx"] for row in rows} == {"8", "16"}


@pytest.mark.unittest
def test_config_errors(tmp_path, out_dir):
    """Unknown keys and unsupported runs exit with the config code"""
    config = write_config(tmp_path, "[grid]\nnx = 8\ncolour = red\n")
    assert main(["check-exponents", "--config", config, "--out", out_dir]) == 2

    assert main(["fit-rates", "--out", out_dir]) == 2
    assert verdict(out_dir).startswith("FAIL config:")

    assert main(["check-exponents", "--refine", "0", "--out", out_dir]) == 2

    config = write_config(tmp_path, "[verify]\nestimate = C42\n", name="bad.ini")
    assert main(["verify-decay", "--config", config, "--out", out_dir]) == 2
