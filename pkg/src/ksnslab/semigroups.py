#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Semigroup actions by truncated eigen-expansion.

A ``SemigroupEngine`` wraps an ``OperatorSpectrum`` and evaluates
``e^{t L}`` (Neumann heat) or ``e^{-t A}`` (Stokes) on fields through
their modal coefficients. The composite actions needed by the mild
formulation (gradient after heat, heat after divergence, Stokes after
Leray projection) are thin wrappers around it.

Engines are immutable. The process wide ``EngineCache`` builds each
engine once per grid, kind and truncation:

.. code-block:: python

    >>> engine = EngineCache().get(grid, "neumann_laplacian")
    >>> later = heat_apply(engine, 0.1, field)
"""

# Stdlib:
import logging
import math
import threading

from dataclasses import dataclass

# External:
import numpy as np
import scipy.linalg

# Internal:
from ksnslab.errors import (
    InvalidInputError, ProblemTooLargeError, SingularityError
)
from ksnslab.operators import (
    NEUMANN, STOKES, DiscreteOperator, ScalarField, VectorField,
    divergence, gradient, is_solenoidal, leray_project, neumann_laplacian,
    neumann_spectrum, stokes_operator, stokes_spectrum,
)
from ksnslab.util import Singleton, freeze, validate_time


LOGGER = logging.getLogger(__name__)

DEFAULT_KMAX = 256
DEFAULT_KMAX_STOKES = 128

# Largest grids the dense matrix exponential accepts.
ORACLE_SCALAR_CELLS = 64 * 64
ORACLE_VECTOR_CELLS = 32 * 32

TAIL_WARN = 1e-3


def field_values(field):
    """Flat values of a field (stacked components for vector fields)"""
    if isinstance(field, VectorField):
        return field.stacked()
    return field.values


def field_like(kind, grid, values):
    """Wrap flat values as a field of the given operator kind"""
    if kind == STOKES:
        return VectorField.from_stacked(grid, values)
    return ScalarField(grid, values)


class SemigroupEngine(object):
    """Truncated modal representation of a semigroup.

    :param spectrum: (OperatorSpectrum) Eigenpairs to expand in.
    :param kmax: (int) Number of leading modes to retain (default: all).
    """
    def __init__(self, spectrum, kmax=None):
        kmax = spectrum.kmax if kmax is None else int(kmax)
        if not 1 <= kmax <= spectrum.kmax:
            raise InvalidInputError(
                "Engine kmax must lie in [1, {}], got {}".format(
                    spectrum.kmax, kmax
                )
            )

        self.spectrum = spectrum
        self.kind = spectrum.kind
        self.grid = spectrum.grid
        self.eigenvalues = freeze(np.array(spectrum.eigenvalues[:kmax]))
        self._basis = freeze(np.array(spectrum.eigenvectors[:kmax]))

    @property
    def kmax(self):
        return len(self.eigenvalues)

    @property
    def gap(self):
        return self.spectrum.gap

    def coefficients(self, values):
        """Modal coefficients <values, mode_k> of flat data (..., m)"""
        return (np.asarray(values) @ self._basis.T) * self.grid.weight

    def synthesize(self, coeffs):
        """Flat data from modal coefficients (..., k)"""
        return np.asarray(coeffs) @ self._basis

    def propagate(self, coeffs, t):
        """Multiply coefficients by exp(-lambda_k t)"""
        return coeffs * np.exp(-self.eigenvalues * t)

    def project(self, values):
        """Orthogonal projection onto the retained modes"""
        return self.synthesize(self.coefficients(values))

    def tail_energy(self, values):
        """Relative L2 mass outside the retained modes, 0 for zero input"""
        values = np.asarray(values, dtype=float)
        total = np.linalg.norm(values)
        if total == 0.0:
            return 0.0

        return float(np.linalg.norm(values - self.project(values)) / total)

    def evolve(self, field, t):
        """exp(-t lambda) applied to a field of this engine's kind"""
        coeffs = self.propagate(self.coefficients(field_values(field)), t)
        return field_like(self.kind, self.grid, self.synthesize(coeffs))

    def __repr__(self):
        return "SemigroupEngine(kind={}, kmax={}, grid={}x{})".format(
            self.kind, self.kmax, self.grid.nx, self.grid.ny
        )


def build_engine(grid, kind, kmax=None):
    """Assemble the operator, solve for its spectrum and wrap it.

    :param grid: (Grid) The grid.
    :param kind: (str) ``neumann_laplacian`` or ``stokes``.
    :param kmax: (int) Retained modes, capped by the subspace dimension.
    :returns SemigroupEngine: The engine.
    """
    if kind == NEUMANN:
        kmax = min(kmax or DEFAULT_KMAX, grid.size)
        spectrum = neumann_spectrum(neumann_laplacian(grid), kmax)
    elif kind == STOKES:
        kmax = min(kmax or DEFAULT_KMAX_STOKES, (grid.nx - 1) * (grid.ny - 1))
        spectrum = stokes_spectrum(stokes_operator(grid), kmax)
    else:
        raise InvalidInputError("Unknown engine kind: {}".format(kind))

    return SemigroupEngine(spectrum)


class EngineCache(object, metaclass=Singleton):
    """Process wide cache of semigroup engines"""
    def __init__(self, cfg=None):
        """Create the cache.

        :param cfg (dict): Truncation settings, keys ``kmax`` (default 256)
                           and ``kmax_stokes`` (default 128).
        """
        self._lock = threading.RLock()

        with self._lock:
            self._cfg = cfg or {}
            self._engines = {}

    def reload(self, cfg=None):
        """Drop every cached engine and take over a new config"""
        with self._lock:
            self._cfg = cfg or {}
            self._engines = {}

    def get(self, grid, kind):
        """Get (and build on first use) the engine for grid and kind"""
        if kind == STOKES:
            kmax = self._cfg.get("kmax_stokes", DEFAULT_KMAX_STOKES)
        else:
            kmax = self._cfg.get("kmax", DEFAULT_KMAX)

        key = (kind, grid.lx, grid.ly, grid.nx, grid.ny, kmax)
        with self._lock:
            if key not in self._engines:
                LOGGER.debug("Building %s engine for %s", kind, grid)
                self._engines[key] = build_engine(grid, kind, kmax)
            return self._engines[key]


def _require(engine, kind, field):
    if engine.kind != kind:
        raise InvalidInputError(
            "Expected a {} engine, got {}".format(kind, engine.kind)
        )
    if field.grid != engine.grid:
        raise InvalidInputError(
            "Field on a {}x{} grid, engine on {}x{}".format(
                field.grid.nx, field.grid.ny, engine.grid.nx, engine.grid.ny
            )
        )


###########
# ACTIONS #
###########

def heat_apply(engine, t, w):
    """Neumann heat semigroup e^{t L} applied to a scalar field.

    :param engine: (SemigroupEngine) Neumann engine.
    :param t: (float) Time, t >= 0.
    :param w: (ScalarField) Data.
    :returns ScalarField: The expansion sum_k <w, psi_k> e^{-lambda_k t} psi_k.
    :raises: InvalidInputError for negative t, a wrong engine or a field
             on another grid.
    """
    validate_time(t)
    _require(engine, NEUMANN, w)
    return engine.evolve(w, t)


def heat_grad_apply(engine, t, w):
    """Gradient of heat_apply; only defined for t > 0"""
    validate_time(t, strict=True)
    return gradient(heat_apply(engine, t, w))


def heat_div_apply(engine, t, w):
    """Heat semigroup after the divergence of a vector field (t > 0).

    Taking the divergence first keeps the result mean free for fields
    without wall flux.
    """
    validate_time(t, strict=True)
    return heat_apply(engine, t, divergence(w))


def stokes_apply(engine, t, u, div_tol=None):
    """Stokes semigroup e^{-t A} applied to a solenoidal field.

    :param engine: (SemigroupEngine) Stokes engine.
    :param t: (float) Time, t >= 0.
    :param u: (VectorField) Solenoidal data.
    :returns VectorField: Solenoidal result.
    :raises: InvalidInputError if u is not solenoidal or not on the
             engine's grid.
    """
    validate_time(t)
    _require(engine, STOKES, u)
    ok = is_solenoidal(u) if div_tol is None else is_solenoidal(u, div_tol)
    if not ok:
        raise InvalidInputError("Stokes semigroup needs a solenoidal field")

    return engine.evolve(u, t)


def stokes_forced_apply(engine, t, f):
    """Stokes semigroup after the Leray projection, e^{-t A} P f (t > 0)"""
    validate_time(t, strict=True)
    return stokes_apply(engine, t, leray_project(f))


def tail_energy(engine, field):
    """||w - Pi_kmax w||_2 / ||w||_2 for the engine's retained modes"""
    return engine.tail_energy(field_values(field))


def expm_oracle(op, t, w):
    """Dense matrix exponential exp(t G) applied to w.

    :param op: (DiscreteOperator or numpy.ndarray) The operator or a
               square generator matrix G.
    :param t: (float) Time.
    :param w: Field matching op, or an array when op is a matrix.
    :returns: Field (or array) exp(t G) w.
    :raises: ProblemTooLargeError above 64x64 (scalar) or 32x32 (vector).
    """
    if not isinstance(op, DiscreteOperator):
        return scipy.linalg.expm(t * np.asarray(op, dtype=float)) @ np.asarray(w)

    limit = ORACLE_SCALAR_CELLS if op.kind == NEUMANN else ORACLE_VECTOR_CELLS
    if op.grid.size > limit:
        raise ProblemTooLargeError(
            "Dense oracle refuses {} cells for {} (limit {})".format(
                op.grid.size, op.kind, limit
            )
        )

    result = scipy.linalg.expm(t * op.dense_generator()) @ field_values(w)
    return field_like(op.kind, op.grid, result)


#########################
# DUHAMEL KERNEL ACTION #
#########################

HEAT = "heat"
HEAT_GRAD = "heat_grad"
HEAT_DIV = "heat_div"
STOKES_FREE = "stokes"
STOKES_FORCED = "stokes_forced"
KERNEL = "kernel"

_DEFAULT_THETA = {
    HEAT: 0.0,
    HEAT_GRAD: 0.5,
    HEAT_DIV: 0.5,
    STOKES_FREE: 0.0,
    STOKES_FORCED: 0.0,
    KERNEL: 0.0,
}

_APPLIERS = {
    HEAT: heat_apply,
    HEAT_GRAD: heat_grad_apply,
    HEAT_DIV: heat_div_apply,
    STOKES_FREE: stokes_apply,
    STOKES_FORCED: stokes_forced_apply,
}


@dataclass(frozen=True)
class SemigroupAction(object):
    """The kernel s -> e^{a s} S(s) of a Duhamel integral.

    ``theta`` is the exponent of the endpoint singularity s^{-theta} the
    kernel carries; the ``kernel`` kind is the bare scalar weight
    e^{a s} s^{-theta} and needs no engine.
    """
    kind: str
    engine: object = None
    rate: float = 0.0
    theta: float = None

    def __post_init__(self):
        if self.kind not in _DEFAULT_THETA:
            raise InvalidInputError("Unknown action kind: {}".format(self.kind))

        if self.theta is None:
            object.__setattr__(self, "theta", _DEFAULT_THETA[self.kind])

        if self.theta >= 1:
            raise SingularityError(
                "Kernel singularity s^-{} is not integrable".format(self.theta)
            )

        if self.kind != KERNEL and self.engine is None:
            raise InvalidInputError("Action {} needs an engine".format(self.kind))

    def apply(self, s, value):
        """e^{a s} S(s) value for s > 0"""
        return self.regular(s, value) * (s ** -self.theta)

    def regular(self, s, value):
        """s^theta e^{a s} S(s) value, bounded as s -> 0"""
        factor = math.exp(self.rate * s)
        if self.kind == KERNEL:
            return value * factor

        applied = _APPLIERS[self.kind](self.engine, s, value)
        return applied * (factor * s ** self.theta)

    def zero(self, value):
        """Zero element of this action's output type"""
        if self.kind == HEAT_GRAD:
            return VectorField.zeros(value.grid)
        if self.kind == HEAT_DIV:
            return ScalarField.zeros(value.grid)
        return value * 0.0


###########################
# EXPONENTIAL INTEGRATION #
###########################

def phi_one(z):
    """(e^z - 1) / z with the removable singularity filled in"""
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    return np.where(z == 0.0, 1.0, np.expm1(safe) / safe)


def psi_linear(z):
    """Integral of r e^{z r} over [0, 1], i.e. (e^z (z - 1) + 1) / z^2"""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    safe = np.where(small, 1.0, z)
    closed = (np.exp(safe) * (safe - 1.0) + 1.0) / (safe * safe)
    series = 0.5 + z / 3.0 + z ** 2 / 8.0 + z ** 3 / 30.0 + z ** 4 / 144.0
    return np.where(small, series, closed)


class ModalPropagator(object):
    """Exact modal Duhamel weights for piecewise linear forcing.

    For nodes 0 = tau_0 < ... < tau_M, the coefficient of mode k of

        int_0^{tau_m} e^{(a - lambda_k)(tau_m - tau)} F(tau) dtau

    equals ``sum_p weights[m, p, k] * F_k(tau_p)`` when F is linear
    between the nodes.

    :param engine: (SemigroupEngine) The engine providing lambda_k.
    :param rate: (float) The exponential prefactor a.
    :param times: (numpy.ndarray) Nodes, starting at 0, strictly increasing.
    """
    def __init__(self, engine, rate, times):
        times = np.asarray(times, dtype=float)
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise InvalidInputError("Propagator nodes must start at 0 and increase")

        self.engine = engine
        self.rate = float(rate)
        self.times = freeze(times)
        self._decay = freeze(np.exp(np.outer(times, self.rate - engine.eigenvalues)))
        self.weights = freeze(self._build_weights())

    def _build_weights(self):
        mu = self.rate - self.engine.eigenvalues
        widths = np.diff(self.times)
        count = len(self.times)

        # lag[m, p] = tau_m - tau_{p+1}, used only where m >= p + 1.
        lag = self.times[:, None] - self.times[None, 1:]
        active = (lag >= 0.0)[:, :, None]
        growth = np.exp(np.maximum(lag, 0.0)[:, :, None] * mu[None, None, :])
        growth = np.where(active, growth, 0.0)

        z = widths[:, None] * mu[None, :]
        near = widths[:, None] * psi_linear(z)
        far = widths[:, None] * (phi_one(z) - psi_linear(z))

        weights = np.zeros((count, count, len(mu)))
        weights[:, :-1, :] += growth * near[None, :, :]
        weights[:, 1:, :] += growth * far[None, :, :]
        return weights

    def free(self, coeffs0):
        """Coefficients of e^{a t} S(t) y0 at every node, shape (M + 1, k)"""
        return self._decay * np.asarray(coeffs0)[None, :]

    def forced(self, coeffs):
        """Duhamel coefficients for nodal forcing coefficients (M + 1, k)"""
        return np.einsum("mpk,pk->mk", self.weights, np.asarray(coeffs))
