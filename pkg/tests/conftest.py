#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Fixtures to setup tests.
"""

import numpy as np
import pytest

from ksnslab.mild_solver import Engines
from ksnslab.operators import NEUMANN, STOKES, build_grid
from ksnslab.semigroups import EngineCache, build_engine


@pytest.fixture
def grid():
    """A small rectangular grid with unequal cell sizes"""
    return build_grid(1.0, 1.5, 16, 12)


@pytest.fixture
def tiny_grid():
    """The smallest grid the solver tests run on"""
    return build_grid(1.0, 1.0, 8, 8)


@pytest.fixture
def heat_engine(grid):
    """Neumann engine keeping every mode of the small grid"""
    return build_engine(grid, NEUMANN, kmax=grid.size)


@pytest.fixture
def stokes_engine(tiny_grid):
    """Stokes engine keeping every mode of the tiny grid"""
    return build_engine(tiny_grid, STOKES, kmax=(tiny_grid.nx - 1) * (tiny_grid.ny - 1))


@pytest.fixture
def engine_cache():
    """Fixture to run a test with an empty engine cache"""
    EngineCache().reload()
    return EngineCache()


@pytest.fixture
def engines(engine_cache, tiny_grid):
    """Heat and Stokes engines of the tiny grid, freshly cached"""
    return Engines.for_grid(tiny_grid)


@pytest.fixture
def rng():
    """Seeded random generator"""
    return np.random.default_rng(1234)


@pytest.fixture
def out_dir(tmp_path):
    """Output directory of a command line run"""
    return str(tmp_path / "out")
