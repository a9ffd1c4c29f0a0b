#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Lebesgue norms, quotient norms modulo constants and the weighted
time-sup norms of the data space X and the solution spaces Y, Yexp.

All norms use the cell quadrature ``||f||_p = (sum |f_i|^p hx hy)^(1/p)``
and ``||f||_inf = max |f_i|``. Vector fields are measured through the
pointwise magnitude of their two component slots.
"""

# Stdlib:
import logging
import math

from dataclasses import dataclass

# External:
import numpy as np

from scipy.optimize import minimize_scalar

# Internal:
from ksnslab.errors import InsufficientDataError, InvalidInputError
from ksnslab.operators import (
    ScalarField, VectorField, grad_arrays, is_solenoidal
)
from ksnslab.semigroups import heat_grad_apply
from ksnslab.util import (
    freeze, log_linear_slope, validate_exponent, validate_positive
)


LOGGER = logging.getLogger(__name__)

SHIFT_TOL = 1e-10
N_LOG = 40
N_LIN = 24
X_SUP_POINTS = 40
LONG_HORIZON_FACTOR = 20.0
COMPONENTS = ("n", "c", "v", "u")


#########
# LP    #
#########

def lp_rows(values, p, weight):
    """Quadrature L^p norm of every row of a (..., m) array of magnitudes"""
    values = np.abs(np.asarray(values, dtype=float))
    top = np.max(values, axis=-1)
    if math.isinf(p):
        return top

    safe = np.where(top > 0, top, 1.0)
    scaled = values / safe[..., None]
    total = np.sum(scaled ** p, axis=-1) * weight
    return np.where(top > 0, top * total ** (1.0 / p), 0.0)


def magnitude(field):
    """Pointwise magnitude of a scalar field, vector field or field tuple"""
    if isinstance(field, ScalarField):
        return np.abs(field.values)

    if isinstance(field, VectorField):
        return np.hypot(field.x.values, field.y.values)

    squares = sum(magnitude(part) ** 2 for part in field)
    return np.sqrt(squares)


def lp_norm(f, p):
    """Quadrature L^p norm.

    :param f: (ScalarField, VectorField or tuple of those) The field; tuples
              are measured by the Euclidean norm over all their components.
    :param p: (float) Exponent in [1, inf].
    :returns float: The norm.
    :raises: InvalidInputError if p < 1.
    """
    validate_exponent(p)
    grid = f[0].grid if isinstance(f, tuple) else f.grid
    return float(lp_rows(magnitude(f), p, grid.weight))


##################
# QUOTIENT NORMS #
##################

def optimal_shift(values, p, weight):
    """The constant c minimizing ||values + c||_p.

    Closed forms for p in {1, 2, inf}; otherwise a bounded scalar search on
    [-max, -min], outside of which the norm is monotone in c.
    """
    values = np.asarray(values, dtype=float)
    top, low = float(np.max(values)), float(np.min(values))
    if top == low:
        return -top

    if p == 2:
        return -float(np.mean(values))
    if p == 1:
        return -float(np.median(values))
    if math.isinf(p):
        return -0.5 * (top + low)

    scale = top - low

    def objective(shift):
        return np.sum(np.abs((values + shift) / scale) ** p) * weight

    result = minimize_scalar(
        objective,
        bounds=(-top, -low),
        method="bounded",
        options={"xatol": SHIFT_TOL},
    )
    return float(result.x)


def quotient_norm(f, p):
    """Norm of the class [f] in L^p modulo constants.

    :param f: (ScalarField) Any representative.
    :param p: (float) Exponent in [1, inf].
    :returns tuple: (norm, optimal shift c*)
    """
    validate_exponent(p)
    shift = optimal_shift(f.values, p, f.grid.weight)
    norm = lp_rows(f.values + shift, p, f.grid.weight)
    return float(norm), shift


class QuotientClass(object):
    """Equivalence class of a scalar field modulo constants"""
    __slots__ = ["representative", "_shifts"]

    def __init__(self, representative):
        self.representative = representative
        self._shifts = {}

    @property
    def grid(self):
        return self.representative.grid

    def shift(self, p):
        """Optimal shift for exponent p (cached)"""
        if p not in self._shifts:
            self._shifts[p] = quotient_norm(self.representative, p)[1]
        return self._shifts[p]

    def norm(self, p):
        validate_exponent(p)
        rep = self.representative
        return float(lp_rows(rep.values + self.shift(p), p, rep.grid.weight))

    def __add__(self, other):
        return QuotientClass(self.representative + other.representative)

    def __sub__(self, other):
        return QuotientClass(self.representative - other.representative)

    def __mul__(self, scalar):
        return QuotientClass(self.representative * scalar)

    __rmul__ = __mul__


def select_representative(cls, p):
    """Representative f + c* whose plain L^p norm is the class norm"""
    if isinstance(cls, ScalarField):
        cls = QuotientClass(cls)
    return cls.representative + cls.shift(p)


def class_product(f, g):
    """Product on classes: both representatives are mean centred first"""
    if isinstance(f, QuotientClass):
        f = f.representative
    if isinstance(g, QuotientClass):
        g = g.representative
    return ScalarField(
        f.grid, (f.values - np.mean(f.values)) * (g.values - np.mean(g.values))
    )


#############
# EXPONENTS #
#############

@dataclass(frozen=True)
class ExponentTuple(object):
    """Space dimension, Lebesgue exponents and time horizon.

    Admissibility of a tuple for a theorem case is decided by
    ``theory_verifier.check_exponents``; here only p, q, r, s >= 1 holds.
    """
    N: int = 2
    p: float = 4.0
    q: float = 1.5
    r: float = 4.0
    s: float = math.inf
    T: float = 1.0

    def __post_init__(self):
        if self.N not in (2, 3):
            raise InvalidInputError("Dimension N must be 2 or 3, got {}".format(self.N))

        for name in ("p", "q", "r", "s"):
            validate_exponent(getattr(self, name), name)
        validate_positive("T", self.T)

    @property
    def theta_n(self):
        """Time weight exponent N/2 (2/N - 1/q) of the n-component"""
        return 1.0 - self.N / (2.0 * self.q)

    @property
    def theta_grad(self):
        """Time weight exponent N/2 (1/N - 1/r) of grad c and grad v"""
        return 0.5 - self.N / (2.0 * self.r)

    @property
    def theta_u(self):
        """Time weight exponent N/2 (1/N - 1/p) of u"""
        return 0.5 - self.N / (2.0 * self.p)

    def with_horizon(self, horizon):
        return ExponentTuple(self.N, self.p, self.q, self.r, self.s, horizon)


def graded_time_grid(T, n_log=N_LOG, n_lin=N_LIN, refine=1):
    """Sample times clustered near zero: log spaced on [1e-4 T, 0.1 T],
    linear on (0.1 T, T].

    :param T: (float) Horizon.
    :param refine: (int) Multiplies both sample counts.
    :returns numpy.ndarray: Strictly increasing positive times ending at T.
    """
    validate_positive("T", T)
    n_log = int(n_log * refine)
    n_lin = int(n_lin * refine)
    if n_log < 2 or n_lin < 1:
        raise InvalidInputError("Time grid needs n_log >= 2 and n_lin >= 1")

    head = np.geomspace(1e-4 * T, 0.1 * T, n_log)
    tail = np.linspace(0.1 * T, T, n_lin + 1)[1:]
    return np.concatenate([head, tail])


##############
# TRAJECTORY #
##############

@dataclass(frozen=True, eq=False)
class Trajectory(object):
    """Samples of [n, c, v, u] at positive times.

    ``n``, ``c`` and ``v`` hold representatives of their classes, one flat
    row per time; ``u`` holds stacked face values.
    """
    grid: object
    times: np.ndarray
    n: np.ndarray
    c: np.ndarray
    v: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or len(times) == 0:
            raise InsufficientDataError("Trajectory needs at least one sample")
        if times[0] <= 0 or np.any(np.diff(times) <= 0):
            raise InvalidInputError("Trajectory times must be positive and increasing")

        size = self.grid.size
        for name, width in (("n", size), ("c", size), ("v", size), ("u", 2 * size)):
            values = np.array(getattr(self, name), dtype=float)
            if values.shape != (len(times), width):
                raise InvalidInputError(
                    "Trajectory component {} has shape {}".format(name, values.shape)
                )
            object.__setattr__(self, name, freeze(values))

        object.__setattr__(self, "times", freeze(times))

    @classmethod
    def zeros(cls, grid, times):
        count = len(times)
        scalar = np.zeros((count, grid.size))
        return cls(grid, times, scalar, scalar, scalar, np.zeros((count, 2 * grid.size)))

    def __len__(self):
        return len(self.times)

    def scalar(self, name, index):
        """Representative of n, c or v at a sample index"""
        return ScalarField(self.grid, getattr(self, name)[index])

    def quotient(self, name, index):
        return QuotientClass(self.scalar(name, index))

    def velocity(self, index):
        return VectorField.from_stacked(self.grid, self.u[index])

    def scaled(self, factor):
        return Trajectory(
            self.grid, self.times, self.n * factor, self.c * factor,
            self.v * factor, self.u * factor,
        )

    def __sub__(self, other):
        if other.grid != self.grid or not np.array_equal(other.times, self.times):
            raise InvalidInputError("Trajectories live on different grids")

        return Trajectory(
            self.grid, self.times, self.n - other.n, self.c - other.c,
            self.v - other.v, self.u - other.u,
        )


def _class_rows(values, p, weight):
    return np.array([
        lp_rows(row + optimal_shift(row, p, weight), p, weight)
        for row in values
    ])


def _grad_rows(values, grid, r):
    arrays = values.reshape((-1,) + grid.shape)
    gx, gy = grad_arrays(arrays, grid)
    mags = np.hypot(gx, gy).reshape(len(values), -1)
    return lp_rows(mags, r, grid.weight)


def _velocity_rows(values, grid, p):
    size = grid.size
    mags = np.hypot(values[:, :size], values[:, size:])
    return lp_rows(mags, p, grid.weight)


@dataclass(frozen=True)
class SampleNorms(object):
    """Unweighted norms per sample time"""
    n: np.ndarray
    c_class: np.ndarray
    c_grad: np.ndarray
    v_class: np.ndarray
    v_grad: np.ndarray
    u: np.ndarray


def sample_norms(traj, e):
    """Evaluate every norm entering the Y norms at every sample time"""
    weight = traj.grid.weight
    return SampleNorms(
        n=_class_rows(traj.n, e.q, weight),
        c_class=_class_rows(traj.c, math.inf, weight),
        c_grad=_grad_rows(traj.c, traj.grid, e.r),
        v_class=_class_rows(traj.v, math.inf, weight),
        v_grad=_grad_rows(traj.v, traj.grid, e.r),
        u=_velocity_rows(traj.u, traj.grid, e.p),
    )


def weighted_samples(traj, e, norms=None):
    """Time weighted component values per sample (the CSV rows).

    :returns dict: component name -> array over the sample times.
    """
    norms = norms or sample_norms(traj, e)
    times = traj.times
    return {
        "n": times ** e.theta_n * norms.n,
        "c": norms.c_class + times ** e.theta_grad * norms.c_grad,
        "v": norms.v_class + times ** e.theta_grad * norms.v_grad,
        "u": times ** e.theta_u * norms.u,
    }


def y_norm(traj, e):
    """Norm of a trajectory in Y, with the sup over its sample times.

    :param traj: (Trajectory) Samples at positive times.
    :param e: (ExponentTuple) Exponents.
    :returns tuple: (total, dict of the four component norms)
    """
    norms = sample_norms(traj, e)
    times = traj.times
    components = {
        "n": float(np.max(times ** e.theta_n * norms.n)),
        "c": float(np.max(norms.c_class) +
                   np.max(times ** e.theta_grad * norms.c_grad)),
        "v": float(np.max(norms.v_class) +
                   np.max(times ** e.theta_grad * norms.v_grad)),
        "u": float(np.max(times ** e.theta_u * norms.u)),
    }
    return sum(components.values()), components


def y_distance(first, second, e):
    """Y norm of the difference of two trajectories"""
    return y_norm(first - second, e)[0]


@dataclass(frozen=True)
class DecayRates(object):
    """Rates entering the exponential weights of Yexp"""
    sigma_tilde: float
    kappa_beta1: float
    beta2: float
    rho2: float

    def __post_init__(self):
        for name in ("sigma_tilde", "kappa_beta1", "beta2", "rho2"):
            validate_positive(name, getattr(self, name), strict=False)

    def weights(self):
        """Exponential rate per component"""
        st = self.sigma_tilde
        return {
            "n": st,
            "c": min(self.kappa_beta1, st),
            "v": min(self.beta2, st),
            "u": min(self.rho2, st),
        }

    def horizon(self, factor=LONG_HORIZON_FACTOR):
        """Horizon standing in for T = inf: factor over the slowest positive rate.

        :returns float: The horizon, or None when no weight decays.
        """
        positive = [rate for rate in self.weights().values() if rate > 0]
        if not positive:
            return None
        return factor / min(positive)


@dataclass(frozen=True)
class YexpReport(object):
    total: float
    components: dict
    slopes: dict
    growing: bool


def yexp_norm(traj, e, rates, decade=0.1):
    """Exponentially weighted Y norm over the sampled horizon.

    The trend of every weighted component over the final ``decade`` of the
    horizon is fitted; a positive slope means the sup would keep growing
    with the horizon and is reported via ``growing``.

    :param rates: (DecayRates) Non-negative rates.
    :returns YexpReport: Total, components, final slopes and growth flag.
    """
    norms = sample_norms(traj, e)
    times = traj.times
    exps = rates.weights()

    n_part = np.exp(exps["n"] * times) * times ** e.theta_n * norms.n
    c_part = np.exp(exps["c"] * times) * norms.c_class
    v_part = np.exp(exps["v"] * times) * norms.v_class
    u_part = np.exp(exps["u"] * times) * times ** e.theta_u * norms.u
    c_grad = times ** e.theta_grad * norms.c_grad
    v_grad = times ** e.theta_grad * norms.v_grad

    components = {
        "n": float(np.max(n_part)),
        "c": float(np.max(c_part) + np.max(c_grad)),
        "v": float(np.max(v_part) + np.max(v_grad)),
        "u": float(np.max(u_part)),
    }

    tail = times >= times[-1] * (1.0 - decade)
    slopes = {}
    for name, part in (("n", n_part), ("c", c_part), ("v", v_part), ("u", u_part)):
        window = part[tail]
        if np.count_nonzero(window > 0) < 2 or np.any(window <= 0):
            slopes[name] = None
            continue
        slopes[name] = log_linear_slope(times[tail], window)[0]

    growing = any(slope is not None and slope > 1e-6 for slope in slopes.values())
    if growing:
        LOGGER.warning("Weighted Yexp components still grow: %s", slopes)

    return YexpReport(sum(components.values()), components, slopes, growing)


##########
# X NORM #
##########

def x_components(data, e, engine, points=X_SUP_POINTS):
    """Component norms of initial data in X and the data constant X0.

    :param data: (iterable) n0, c0, v0 (ScalarField) and u0 (VectorField).
    :param e: (ExponentTuple) Exponents; the sup runs over a log grid
              of ``points`` times in [1e-4 T, T].
    :param engine: (SemigroupEngine) Neumann engine.
    :returns dict: keys X1..X4 and X0 = 4 X1 + X2 + X3 + X4.
    :raises: InvalidInputError if u0 is not solenoidal.
    """
    n0, c0, v0, u0 = data
    if not is_solenoidal(u0):
        raise InvalidInputError("Initial velocity must be solenoidal")

    times = np.geomspace(1e-4 * e.T, e.T, points)

    def gradient_sup(field):
        if np.ptp(field.values) == 0.0:
            return 0.0
        return max(
            t ** e.theta_grad * lp_norm(heat_grad_apply(engine, t, field), e.r)
            for t in times
        )

    parts = {
        "X1": quotient_norm(n0, e.N / 2.0)[0],
        "X2": quotient_norm(c0, math.inf)[0] + gradient_sup(c0),
        "X3": quotient_norm(v0, math.inf)[0] + gradient_sup(v0),
        "X4": lp_norm(u0, e.N),
    }
    parts["X0"] = 4 * parts["X1"] + parts["X2"] + parts["X3"] + parts["X4"]
    return parts


def x_norm(data, e, engine, points=X_SUP_POINTS):
    """Norm of initial data in X, see x_components"""
    parts = x_components(data, e, engine, points)
    return parts["X1"] + parts["X2"] + parts["X3"] + parts["X4"]
