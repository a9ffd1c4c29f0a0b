#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Numerical laboratory for mild solutions of a Keller-Segel (attraction
and repulsion) Navier-Stokes system on a rectangle with no-flux walls.

The package discretizes the Neumann Laplacian and the Stokes operator on a
staggered grid, applies their semigroups through truncated eigen
expansions, measures solutions in the time-weighted norms of the
well-posedness theory and runs the Picard iteration of the mild
formulation. On top of that it verifies the ingredients of the theory
numerically: decay estimates of the semigroups, the beta-integral bound,
the exponent conditions of both global existence results, the smallness
threshold and the exponential decay rates.

Basic usage example:

.. code-block:: python

    >>> grid = build_grid(1.0, 1.0, 32, 32)
    >>> e = ExponentTuple(N=2, p=4, q=1.5, r=4, T=1.0)
    >>> data = InitialData.zeros(grid)
    >>> traj, diag = solve_mild(data, ModelParams(), e)
    >>> diag.converged  # => True
    >>> check_exponents(e, "T1", "iii").passed  # => True

See the docstrings for more details.
"""

__version__ = '1.0.0'


# pylint: disable=unused-import
from ksnslab.operators import (
    Grid, ScalarField, VectorField, build_grid, gradient, divergence,
    leray_project, neumann_laplacian, stokes_operator, neumann_spectrum,
    stokes_spectrum,
)
from ksnslab.semigroups import (
    EngineCache, SemigroupEngine, heat_apply, heat_grad_apply, heat_div_apply,
    stokes_apply, expm_oracle,
)
from ksnslab.norms import (
    ExponentTuple, QuotientClass, Trajectory, DecayRates, lp_norm,
    quotient_norm, optimal_shift, x_norm, y_norm, yexp_norm,
)
from ksnslab.mild_solver import (
    ModelParams, InitialData, duhamel, picard_step, solve_mild,
    residual_check, contraction_report,
)
from ksnslab.theory_verifier import (
    verify_decay, verify_beta_bound, check_exponents, threshold_search,
    fit_decay_rates,
)
from ksnslab.config import RunConfig, parse_config
from ksnslab.persist import FieldSnapshot, read_snapshot, write_snapshot
from ksnslab.errors import KsnsError, InternalError
