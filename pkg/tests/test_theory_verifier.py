#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Test the numerical checks of the theory.
"""

# Stdlib:
import math

# External:
import numpy as np
import pytest

from hypothesis import given, settings, strategies as st

# Internal:
from ksnslab.errors import (
    BracketError, InsufficientDataError, InvalidInputError, SingularityError
)
from ksnslab.mild_solver import InitialData, ModelParams
from ksnslab.norms import DecayRates, ExponentTuple, Trajectory, graded_time_grid, x_norm
from ksnslab.operators import ScalarField, VectorField, build_grid, is_solenoidal
from ksnslab.semigroups import build_engine
from ksnslab.theory_verifier import (
    default_direction, envelope_stability, estimate_exponent, fit_decay_rates,
    latin_beta_grid, make_corpus, run_beta_grid, threshold_search,
    unit_direction, verify_beta_bound, verify_decay, check_exponents,
)


TIMES = np.geomspace(1e-3, 1.0, 20)


def solver_kwargs():
    return dict(times=graded_time_grid(0.2, n_log=8, n_lin=6), maxiter=20)


#######################################
# CORPUS AND DECAY ESTIMATES          #
#######################################

@pytest.mark.unittest
def test_corpus_is_deterministic(grid):
    """Same seed, same fields; the kinds have the expected shapes"""
    first = make_corpus(grid, seed=3)
    second = make_corpus(grid, seed=3)
    assert len(first) == 50
    for left, right in zip(first, second):
        assert np.array_equal(left.values, right.values)
    assert all(abs(f.mean()) < 1e-12 for f in first)

    assert not np.array_equal(make_corpus(grid, seed=4)[0].values, first[0].values)

    vectors = make_corpus(grid, seed=3, kind="vector")
    assert isinstance(vectors[0], VectorField)

    solenoidal = make_corpus(grid, seed=3, kind="solenoidal", counts=(3, 1, 1))
    assert len(solenoidal) == 5
    assert all(is_solenoidal(u, div_tol=1e-9) for u in solenoidal)

    tensors = make_corpus(grid, seed=3, kind="tensor", counts=(2, 0, 0))
    assert len(tensors[0]) == 4

    with pytest.raises(InvalidInputError):
        make_corpus(grid, kind="matrix")


@pytest.mark.unittest
def test_estimate_exponents():
    """theta = N/2 (1/q - 1/p) plus the derivative half"""
    assert estimate_exponent("C0", math.inf, 1) == pytest.approx(1.0)
    assert estimate_exponent("C2", 4, 2) == pytest.approx(0.75)
    assert estimate_exponent("C1", 3, 3) == 0.5
    assert estimate_exponent("C4", 2, 2) == 0.0


@pytest.mark.unittest
def test_l2_heat_decay_envelope(heat_engine):
    """e^{gap t} ||S(t) w||_2 <= ||w||_2 for mean free w"""
    corpus = make_corpus(heat_engine.grid, seed=0)
    report = verify_decay(heat_engine, "C0", 2, 2, corpus, times=TIMES)
    assert report.envelope <= 1.0 + 1e-9
    assert report.envelope > 0.9
    assert report.ratios.shape == (50, len(TIMES))
    assert report.tail_energy < 1e-10
    assert report.excluded == []


@pytest.mark.unittest
def test_quotient_envelope_below_plain(heat_engine):
    """Measuring modulo constants never increases the L2 envelope"""
    corpus = make_corpus(heat_engine.grid, seed=1, counts=(10, 5, 5))
    plain = verify_decay(heat_engine, "C0", 4, 2, corpus, times=TIMES)
    quotient = verify_decay(heat_engine, "C0q", 4, 2, corpus, times=TIMES)
    assert quotient.envelope <= plain.envelope * (1 + 1e-9)


@pytest.mark.unittest
def test_gradient_envelopes_are_finite(heat_engine):
    """C1, C2 and C3 stay bounded as t goes to zero"""
    scalars = make_corpus(heat_engine.grid, seed=2, counts=(10, 5, 5))
    vectors = make_corpus(heat_engine.grid, seed=2, kind="vector", counts=(10, 5, 5))
    for estimate, p, q, corpus in (
            ("C1", 4, 4, scalars), ("C2", 4, 2, scalars), ("C3", 4, 2, vectors)):
        report = verify_decay(heat_engine, estimate, p, q, corpus, times=TIMES)
        assert math.isfinite(report.envelope)
        assert report.envelope > 0


@pytest.mark.unittest
def test_l2_stokes_decay_envelope(stokes_engine):
    """e^{gap t} ||e^{-tA} u||_2 <= ||u||_2 on solenoidal fields"""
    corpus = make_corpus(stokes_engine.grid, seed=0, kind="solenoidal", counts=(10, 5, 5))
    report = verify_decay(stokes_engine, "C4", 2, 2, corpus, times=TIMES)
    assert report.envelope <= 1.0 + 1e-9

    tensors = make_corpus(stokes_engine.grid, seed=0, kind="tensor", counts=(5, 0, 0))
    report = verify_decay(stokes_engine, "C6", 4, 2, tensors, times=TIMES)
    assert math.isfinite(report.envelope)


@pytest.mark.unittest
def test_verify_decay_rejects_bad_requests(heat_engine, stokes_engine):
    """Unknown estimates, q > p, wrong engines, empty or biased corpora"""
    corpus = make_corpus(heat_engine.grid, seed=0, counts=(2, 0, 0))
    with pytest.raises(InvalidInputError):
        verify_decay(heat_engine, "C9", 2, 2, corpus)

    with pytest.raises(InvalidInputError):
        verify_decay(heat_engine, "C0", 2, 4, corpus)

    with pytest.raises(InvalidInputError):
        verify_decay(heat_engine, "C1", 4, 2, corpus)

    with pytest.raises(InvalidInputError):
        verify_decay(stokes_engine, "C0", 2, 2, corpus)

    with pytest.raises(InsufficientDataError):
        verify_decay(heat_engine, "C0", 2, 2, [])

    biased = [ScalarField.constant(heat_engine.grid, 1.0) + corpus[0]]
    with pytest.raises(InvalidInputError):
        verify_decay(heat_engine, "C0", 2, 2, biased)


@pytest.mark.unittest
def test_zero_samples_are_excluded(heat_engine):
    """0/0 samples are listed, not measured"""
    corpus = [ScalarField.zeros(heat_engine.grid)] + make_corpus(
        heat_engine.grid, seed=0, counts=(2, 0, 0)
    )
    report = verify_decay(heat_engine, "C0", 2, 2, corpus, times=TIMES)
    assert report.excluded == [0]
    assert len(report.ratios) == 2

    with pytest.raises(InsufficientDataError):
        verify_decay(heat_engine, "C0", 2, 2, corpus[:1], times=TIMES)


@pytest.mark.unittest
def test_envelope_stability_under_refinement():
    """The L2 envelope hardly moves when the grid is refined"""
    coarse_grid = build_grid(1.0, 1.0, 8, 8)
    fine_grid = coarse_grid.refined(2)
    reports = [
        verify_decay(
            build_engine(g, "neumann_laplacian", kmax=g.size), "C0", 2, 2,
            make_corpus(g, seed=5, counts=(5, 2, 2)), times=TIMES,
        )
        for g in (coarse_grid, fine_grid)
    ]
    assert envelope_stability(*reports) < 0.25


#######################################
# BETA BOUND                          #
#######################################

@pytest.mark.unittest
def test_beta_bound_equality_cases():
    """For a = b the bound is attained"""
    check = verify_beta_bound(0.5, 0.5, 1.0, 1.0, 2.0)
    assert check.lhs == pytest.approx(math.pi * math.exp(-2.0), rel=1e-8)
    assert check.rhs == pytest.approx(check.lhs, rel=1e-7)
    assert check.rhs_displayed == pytest.approx(math.pi * math.exp(-1.0))
    assert check.passed

    check = verify_beta_bound(0.0, 0.0, 2.0, 2.0, 3.0)
    assert check.lhs == pytest.approx(3.0 * math.exp(-6.0), rel=1e-8)
    assert check.passed


@pytest.mark.unittest
def test_beta_bound_strict_case():
    """Unequal rates give a strict inequality"""
    check = verify_beta_bound(-0.5, 0.25, 0.5, 3.0, 4.0)
    assert check.passed
    assert check.lhs < check.rhs


@pytest.mark.unittest
def test_beta_bound_singular():
    """x or y >= 1 make the integral diverge"""
    with pytest.raises(SingularityError):
        verify_beta_bound(1.0, 0.0, 1.0, 1.0, 1.0)

    with pytest.raises(SingularityError):
        verify_beta_bound(0.0, 1.5, 1.0, 1.0, 1.0)


@pytest.mark.unittest
def test_latin_grid():
    """200 points inside the parameter box, every check passes"""
    points = latin_beta_grid(200, seed=0)
    assert points.shape == (200, 5)
    assert np.all(np.abs(points[:, :2]) < 1)
    assert np.all((points[:, 2:4] > 0) & (points[:, 2:4] <= 5))
    assert np.all((points[:, 4] > 0) & (points[:, 4] <= 10))
    assert np.array_equal(points, latin_beta_grid(200, seed=0))

    checks = run_beta_grid(200, seed=0)
    assert len(checks) == 200
    assert all(check.passed for check in checks)


#######################################
# EXPONENT CONDITIONS                 #
#######################################

@pytest.mark.unittest
@pytest.mark.parametrize("kwargs, theorem, case, passed", [
    (dict(N=3, s=3, q=2, r=4, p=5.99), "T1", "i", True),
    (dict(N=3, s=3, q=2, r=4, p=6), "T1", "i", False),
    (dict(N=2, s=4, q=1.5, r=4, p=3), "T1", "ii", True),
    (dict(N=2, s=4, q=1.5, r=4, p=2.9), "T1", "ii", False),
    (dict(), "T1", "iii", True),
    (dict(q=1), "T1", "iii", False),
    (dict(N=2, q=2, p=4, r=4), "T2", "i", False),
    (dict(N=3, q=2, p=5, r=4), "T2", "i", True),
    (dict(N=3, q=2, p=6, r=4), "T2", "i", False),
    (dict(N=2, q=2, p=4, r=4), "T2", "ii", True),
    (dict(N=2, q=3, p=4, r=4), "T2", "ii", False),
    (dict(N=2, q=3, p=5, r=4), "T2", "iii", True),
    (dict(N=2, q=3, p=6, r=4), "T2", "iii", False),
])
def test_exponent_table(kwargs, theorem, case, passed):
    """Known admissible and inadmissible tuples"""
    verdict = check_exponents(ExponentTuple(**kwargs), theorem, case)
    assert verdict.passed is passed
    assert bool(verdict.violated) is not passed


@pytest.mark.unittest
def test_render():
    """The verdict renders a headline and the estimate annotations"""
    verdict = check_exponents(ExponentTuple(N=2, q=2, p=4, r=4), "T2", "ii")
    text = verdict.render()
    assert text.startswith("T2 case (ii): PASS")
    assert "[no2z]" in text

    failed = check_exponents(ExponentTuple(N=2, q=3, p=4, r=4), "T2", "ii").render()
    assert "violated: q = N" in failed


@pytest.mark.unittest
def test_unknown_tags():
    """Unknown theorem or case tags are invalid input"""
    with pytest.raises(InvalidInputError):
        check_exponents(ExponentTuple(), "T3", "i")

    with pytest.raises(InvalidInputError):
        check_exponents(ExponentTuple(), "T1", "iv")


@pytest.mark.unittest
@settings(max_examples=50, deadline=None)
@given(q=st.floats(1.6, 2.9), fraction=st.floats(0.01, 0.99))
def test_three_dimensional_window(q, fraction):
    """T2 (i) in 3D accepts exactly 3 < p < 3q / (3 - q)"""
    bound = 3 * q / (3 - q)
    p = 3 + fraction * (bound - 3)
    inside = check_exponents(ExponentTuple(N=3, q=q, p=p, r=p), "T2", "i")
    assert inside.passed

    outside = check_exponents(ExponentTuple(N=3, q=q, p=bound * 1.01, r=p), "T2", "i")
    assert not outside.passed


#######################################
# THRESHOLD AND RATES                 #
#######################################

@pytest.mark.unittest
def test_unit_direction(tiny_grid, engines):
    """Directions are normalized in X, zero has none"""
    e = ExponentTuple(T=0.2)
    direction = default_direction(tiny_grid, e, engines.heat)
    assert x_norm(direction, e, engines.heat) == pytest.approx(1.0)

    with pytest.raises(InvalidInputError):
        unit_direction(InitialData.zeros(tiny_grid), e, engines.heat)


@pytest.mark.unittest
def test_threshold_brackets(tiny_grid, engines):
    """A bracket needs a converging lower and a failing upper amplitude"""
    e = ExponentTuple(T=0.2)
    direction = default_direction(tiny_grid, e, engines.heat)

    with pytest.raises(InvalidInputError):
        threshold_search(ModelParams(), e, direction.scaled(2.0), engines=engines)

    with pytest.raises(BracketError):
        threshold_search(
            ModelParams(), e, direction, lo=0.0, hi=1e-3, steps=1,
            engines=engines, **solver_kwargs()
        )

    with pytest.raises(BracketError):
        threshold_search(
            ModelParams(), e, direction, lo=1e4, hi=1e5, steps=1,
            engines=engines, **solver_kwargs()
        )


@pytest.mark.slow
def test_threshold_search(tiny_grid, engines):
    """Bisection keeps a converging lower and a failing upper amplitude"""
    e = ExponentTuple(T=0.2)
    direction = default_direction(tiny_grid, e, engines.heat)
    result = threshold_search(
        ModelParams(chi=5.0), e, direction, lo=0.0, hi=1e4, steps=4,
        engines=engines, **solver_kwargs()
    )

    assert 0.0 <= result.delta < 1e4
    assert result.width == pytest.approx(1e4 / 2 ** 4)
    assert len(result.trace) == 6
    converged = {amp: ok for amp, ok, _, _ in result.trace}
    assert converged[result.lo] and not converged[result.hi]


def decaying_trajectory(grid, rate, times):
    profile = np.cos(np.pi * grid.cell_centers()[0].ravel())
    n = np.exp(-rate * times)[:, None] * profile[None, :]
    zero = np.zeros_like(n)
    return Trajectory(grid, times, n, zero, zero, np.zeros((len(times), 2 * grid.size)))


@pytest.mark.unittest
def test_fit_decay_rates(tiny_grid):
    """A pure exponential is fitted within two percent"""
    e = ExponentTuple(N=2, p=4, q=1.5, r=4, T=10.0)
    times = np.linspace(0.1, 10.0, 40)
    traj = decaying_trajectory(tiny_grid, 1.0, times)

    fits = fit_decay_rates(traj, e, DecayRates(1.0, 1.0, 1.0, 1.0))
    assert fits["n"].rate == pytest.approx(1.0, rel=0.02)
    assert fits["n"].passed
    assert fits["c"].skipped and fits["u"].skipped

    strict = fit_decay_rates(traj, e, DecayRates(1.5, 1.0, 1.0, 1.0))
    assert not strict["n"].passed
    assert strict["n"].residual == pytest.approx(-0.5, abs=0.02)


@pytest.mark.unittest
def test_fit_decay_rates_needs_samples(tiny_grid):
    """Too few samples in the window cannot be fitted"""
    e = ExponentTuple(T=1.0)
    traj = decaying_trajectory(tiny_grid, 1.0, np.linspace(0.1, 1.0, 5))
    with pytest.raises(InsufficientDataError):
        fit_decay_rates(traj, e, DecayRates(1.0, 1.0, 1.0, 1.0))
