#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Test the staggered-grid operators and their spectra.
"""

# External:
import numpy as np
import pytest

from numpy.testing import assert_allclose

# Internal:
from ksnslab.errors import InvalidInputError, PoissonError
from ksnslab.operators import (
    ScalarField, VectorField, advect, build_grid, clear_walls, curl,
    divergence, flux_divergence, gradient, inner, is_solenoidal,
    leray_project, neumann_laplacian, neumann_spectrum, solve_neumann_poisson,
    stokes_operator, stokes_spectrum,
)


def random_scalar(grid, rng):
    return ScalarField(grid, rng.normal(size=grid.size))


def random_vector(grid, rng, walls=True):
    wx = rng.normal(size=grid.shape)
    wy = rng.normal(size=grid.shape)
    if not walls:
        wx, wy = clear_walls(wx, wy)
    return VectorField.from_arrays(grid, wx, wy)


@pytest.mark.unittest
def test_build_grid_validation():
    """Non-positive sides and too few cells are rejected"""
    with pytest.raises(InvalidInputError):
        build_grid(0.0, 1.0, 8, 8)

    with pytest.raises(InvalidInputError):
        build_grid(1.0, -1.0, 8, 8)

    with pytest.raises(ValueError):
        build_grid(1.0, 1.0, 3, 8)

    grid = build_grid(2.0, 1.0, 8, 4)
    assert grid.hx == pytest.approx(0.25)
    assert grid.weight == pytest.approx(0.0625)
    assert grid.shape == (4, 8)
    assert grid.refined(2).nx == 16


@pytest.mark.unittest
def test_field_validation(grid):
    """Fields reject NaN, wrong sizes and grid mismatches"""
    with pytest.raises(InvalidInputError):
        ScalarField(grid, np.full(grid.size, np.nan))

    with pytest.raises(InvalidInputError):
        ScalarField(grid, np.zeros(grid.size + 1))

    other = build_grid(1.0, 1.0, 8, 8)
    with pytest.raises(InvalidInputError):
        ScalarField.zeros(grid) + ScalarField.zeros(other)

    field = ScalarField.constant(grid, 2.0)
    with pytest.raises(ValueError):
        field.values[0] = 1.0


@pytest.mark.unittest
def test_divergence_of_gradient_is_laplacian(grid, rng):
    """div(grad f) reproduces the Neumann Laplacian exactly"""
    f = random_scalar(grid, rng)
    lap = neumann_laplacian(grid).matrix @ f.values
    assert_allclose(divergence(gradient(f)).values, lap, rtol=1e-12, atol=1e-9)


@pytest.mark.unittest
def test_gradient_divergence_adjoint(grid, rng):
    """<grad f, w> = -<f, div w> for fields without wall flux"""
    f = random_scalar(grid, rng)
    w = random_vector(grid, rng, walls=False)
    assert inner(gradient(f), w) == pytest.approx(-inner(f, divergence(w)), rel=1e-10)


@pytest.mark.unittest
def test_divergence_sums_to_zero(grid, rng):
    """Discrete divergence has zero sum, uniform fields are divergence free"""
    w = random_vector(grid, rng)
    assert abs(np.sum(divergence(w).values)) < 1e-9

    uniform = VectorField(ScalarField.constant(grid, 1.5), ScalarField.constant(grid, -2.0))
    assert_allclose(divergence(uniform).values, 0.0, atol=1e-12)


@pytest.mark.unittest
def test_leray_projection(grid, rng):
    """Leray output is solenoidal, idempotent and orthogonal"""
    w = random_vector(grid, rng)
    pw = leray_project(w)
    assert is_solenoidal(pw)

    assert_allclose(leray_project(pw).stacked(), pw.stacked(), atol=1e-10)
    assert abs(inner(w - pw, pw)) < 1e-10 * inner(w, w)


@pytest.mark.unittest
def test_poisson_rejects_bad_input(grid):
    """A non-zero mean or non-finite data cannot be inverted"""
    with pytest.raises(PoissonError):
        solve_neumann_poisson(np.ones(grid.shape), grid)

    bad = np.zeros(grid.shape)
    bad[0, 0] = np.inf
    with pytest.raises(PoissonError):
        solve_neumann_poisson(bad, grid)


@pytest.mark.unittest
def test_advection_identity(grid, rng):
    """div(f u) - u.grad f equals f div u for u without wall flux"""
    f = random_scalar(grid, rng)
    u = random_vector(grid, rng, walls=False)
    lhs = flux_divergence(f, u) - advect(u, f)
    assert_allclose(lhs.values, f.values * divergence(u).values, atol=1e-9)


@pytest.mark.unittest
def test_curl_is_solenoidal(grid, rng):
    """Streamfunction velocities have zero divergence and wall flux"""
    psi = rng.normal(size=(grid.ny - 1, grid.nx - 1))
    assert is_solenoidal(curl(psi, grid), div_tol=1e-9)


@pytest.mark.unittest
def test_neumann_spectrum(grid):
    """Eigenpairs are sorted, orthonormal and match the 1D symbols"""
    op = neumann_laplacian(grid)
    spec = neumann_spectrum(op, kmax=grid.size)

    assert np.all(np.diff(spec.eigenvalues) >= -1e-12)
    assert abs(spec.eigenvalues[0]) < 1e-10

    gram = spec.eigenvectors @ spec.eigenvectors.T * grid.weight
    assert_allclose(gram, np.eye(grid.size), atol=1e-10)

    residual = -(op.matrix @ spec.eigenvectors.T) - spec.eigenvectors.T * spec.eigenvalues
    assert np.max(np.abs(residual)) < 1e-8 * spec.eigenvalues[-1]

    gap_x = 4.0 / grid.hx ** 2 * np.sin(np.pi / (2 * grid.nx)) ** 2
    gap_y = 4.0 / grid.hy ** 2 * np.sin(np.pi / (2 * grid.ny)) ** 2
    assert spec.gap == pytest.approx(min(gap_x, gap_y), rel=1e-10)


@pytest.mark.unittest
def test_neumann_gap_converges():
    """The spectral gap approaches pi^2 / lx^2 under refinement"""
    grid = build_grid(1.0, 0.5, 32, 16)
    spec = neumann_spectrum(neumann_laplacian(grid), kmax=8)
    assert spec.gap == pytest.approx(np.pi ** 2, rel=1e-2)


@pytest.mark.unittest
def test_neumann_spectrum_kmax_bounds(grid):
    """kmax outside [1, nx * ny] is rejected"""
    with pytest.raises(InvalidInputError):
        neumann_spectrum(neumann_laplacian(grid), kmax=0)

    with pytest.raises(InvalidInputError):
        neumann_spectrum(neumann_laplacian(grid), kmax=grid.size + 1)


@pytest.mark.unittest
def test_neumann_spectrum_constant_mode_only(grid):
    """kmax = 1 keeps the constant mode and still reports the true gap"""
    op = neumann_laplacian(grid)
    single = neumann_spectrum(op, kmax=1)
    assert single.kmax == 1
    assert abs(single.eigenvalues[0]) < 1e-8
    assert np.ptp(single.eigenvectors[0]) < 1e-12
    assert single.gap == pytest.approx(neumann_spectrum(op, kmax=8).gap, rel=1e-12)


@pytest.mark.unittest
def test_stokes_spectrum(tiny_grid):
    """Stokes modes are positive, solenoidal, orthonormal eigenvectors of A"""
    op = stokes_operator(tiny_grid)
    dim = (tiny_grid.nx - 1) * (tiny_grid.ny - 1)
    spec = stokes_spectrum(op, kmax=dim)

    assert spec.gap > 0
    assert np.all(np.diff(spec.eigenvalues) >= -1e-9)

    gram = spec.eigenvectors @ spec.eigenvectors.T * tiny_grid.weight
    assert_allclose(gram, np.eye(dim), atol=1e-8)

    for lam, mode in zip(spec.eigenvalues[:6], spec.eigenvectors[:6]):
        field = VectorField.from_stacked(tiny_grid, mode)
        assert is_solenoidal(field, div_tol=1e-9)

        applied = op.apply(field).stacked()
        assert_allclose(applied, lam * mode, atol=1e-8 * lam * np.max(np.abs(mode)))


@pytest.mark.unittest
def test_stokes_gap_above_neumann_gap(tiny_grid):
    """No-slip walls push the first Stokes eigenvalue above the heat gap"""
    stokes = stokes_spectrum(stokes_operator(tiny_grid), kmax=4)
    heat = neumann_spectrum(neumann_laplacian(tiny_grid), kmax=4)
    assert stokes.gap > heat.gap
