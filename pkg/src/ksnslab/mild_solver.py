#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Mild solutions by Picard iteration on the Duhamel formulation.

The unknowns [n, c, v, u] are sampled on a graded time grid. Every
iterate is obtained from the previous one by evaluating the four Duhamel
integrals

    n = e^{sigma t} e^{t L} n0 - int e^{sigma (t - s)} e^{(t - s) L} F_n
    c = e^{-k1 b1 t} e^{t L} c0 - int e^{-k1 b1 (t - s)} e^{(t - s) L} F_c
    v = e^{-b2 t} e^{t L} v0 - int e^{-b2 (t - s)} e^{(t - s) L} F_v
    u = e^{-t A} u0 - int e^{-(t - s) A} P F_u

in modal space, with the forcing interpolated linearly between samples.
The c, v and u updates consume the freshly computed n.
"""

# Stdlib:
import logging
import math
import time

from dataclasses import dataclass, field

# External:
import numpy as np

from scipy.special import hyp1f1, roots_jacobi, roots_legendre

# Internal:
from ksnslab.errors import (
    DivergenceError, InsufficientDataError, InvalidInputError,
    NonConvergenceError, SingularityError,
)
from ksnslab.norms import (
    DecayRates, Trajectory, graded_time_grid, lp_norm, optimal_shift,
    x_components, y_distance, y_norm, weighted_samples,
)
from ksnslab.operators import (
    NEUMANN, STOKES, ScalarField, VectorField, cells_from_faces,
    convect_arrays, div_arrays, faces_from_cells, grad_arrays, is_solenoidal,
    leray_arrays,
)
from ksnslab.semigroups import EngineCache, ModalPropagator
from ksnslab.util import (
    freeze, log_linear_slope, validate_positive, validate_time
)


LOGGER = logging.getLogger(__name__)

DEFAULT_TOL = 1e-6
DEFAULT_MAXITER = 40
DEFAULT_GUARD = 1e6

THEOREMS = ("T1", "T2")


##############
# PARAMETERS #
##############

@dataclass(frozen=True, eq=False)
class ModelParams(object):
    """Coefficients of the chemotaxis-fluid system.

    In Theorem-2 mode (``theorem="T2"``) the logistic source is replaced
    by pure decay: ``sigma`` stores the negated decay rate and ``mu`` is 0.
    """
    chi: float = 1.0
    xi: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    gamma: float = 1.0
    sigma: float = 0.0
    mu: float = 1.0
    kappa1: int = 1
    kappa2: int = 0
    phi_grad: VectorField = None
    theorem: str = "T1"
    experimental_decay: bool = False

    def __post_init__(self):
        for name in ("chi", "xi", "alpha1", "alpha2", "gamma", "mu"):
            validate_positive(name, getattr(self, name), strict=False)

        for name in ("beta1", "beta2"):
            validate_positive(name, getattr(self, name))

        if not math.isfinite(self.sigma):
            raise InvalidInputError("sigma must be finite", field="sigma")

        for name in ("kappa1", "kappa2"):
            if getattr(self, name) not in (0, 1):
                raise InvalidInputError(
                    "{}: switch must be 0 or 1, got {}".format(
                        name, getattr(self, name)
                    ),
                    field=name,
                )

        if self.theorem not in THEOREMS:
            raise InvalidInputError(
                "Unknown theorem tag: {}".format(self.theorem), field="theorem"
            )

        if self.theorem == "T2" and (self.mu != 0 or self.sigma > 0):
            raise InvalidInputError(
                "Theorem-2 mode needs mu = 0 and sigma <= 0 (sigma = -decay)",
                field="mu" if self.mu != 0 else "sigma",
            )

        if self.experimental_decay:
            LOGGER.warning(
                "Experimental decay mode: logistic model treated on a long horizon"
            )

    @property
    def sigma_tilde(self):
        """Decay rate of the cell density in Theorem-2 mode"""
        return -self.sigma

    @property
    def long_horizon(self):
        """True when the exponentially weighted norms apply"""
        return self.theorem == "T2" or self.experimental_decay

    def decay_rates(self, rho2):
        """Rates of the exponential weights, with rho2 the Stokes gap"""
        return DecayRates(
            sigma_tilde=max(self.sigma_tilde, 0.0),
            kappa_beta1=self.kappa1 * self.beta1,
            beta2=self.beta2,
            rho2=rho2,
        )


@dataclass(frozen=True, eq=False)
class InitialData(object):
    """Initial values n0, c0, v0 (scalar) and u0 (solenoidal vector)"""
    n0: ScalarField
    c0: ScalarField
    v0: ScalarField
    u0: VectorField

    def __post_init__(self):
        grids = {self.n0.grid, self.c0.grid, self.v0.grid, self.u0.grid}
        if len(grids) != 1:
            raise InvalidInputError("Initial data fields live on different grids")

    @classmethod
    def zeros(cls, grid):
        zero = ScalarField.zeros(grid)
        return cls(zero, zero, zero, VectorField.zeros(grid))

    @property
    def grid(self):
        return self.n0.grid

    def __iter__(self):
        return iter((self.n0, self.c0, self.v0, self.u0))

    def scaled(self, factor):
        return InitialData(
            self.n0 * factor, self.c0 * factor, self.v0 * factor, self.u0 * factor
        )


@dataclass(frozen=True)
class Engines(object):
    """Heat and Stokes engines on the same grid"""
    heat: object
    stokes: object

    @classmethod
    def for_grid(cls, grid):
        cache = EngineCache()
        return cls(cache.get(grid, NEUMANN), cache.get(grid, STOKES))


def check_potential_class(phi_grad, e, times):
    """Check the hypotheses on the potential gradient.

    :param phi_grad: (VectorField) Time independent grad phi.
    :param e: (ExponentTuple) Exponents (uses s and N).
    :param times: (numpy.ndarray) Sample times for the weighted sup.
    :returns dict: ``t1_sup`` = sup t^{1/2 - N/(2s)} ||grad phi||_s over the
                   samples, ``t1_ok`` (the weight stays bounded as t -> 0),
                   ``t2_norm`` = ||grad phi||_N and ``t2_ok``.
    """
    exponent = 0.5 - e.N / (2.0 * e.s)
    norm_s = lp_norm(phi_grad, e.s)
    weighted = np.asarray(times, dtype=float) ** exponent * norm_s
    norm_n = lp_norm(phi_grad, e.N)
    t1_sup = float(np.max(weighted))
    return {
        "t1_sup": t1_sup,
        "t1_ok": bool(math.isfinite(t1_sup) and (exponent >= 0 or norm_s == 0)),
        "t2_norm": norm_n,
        "t2_ok": bool(math.isfinite(norm_n)),
    }


###########
# DUHAMEL #
###########

@dataclass(frozen=True)
class Grading(object):
    """Product quadrature layout on [0, t] in the lag variable s = t - tau.

    ``panels`` graded panels with breakpoints t (j / panels)^exponent and
    ``order`` Gauss points per panel.
    """
    panels: int = 16
    order: int = 10
    exponent: float = 2.0

    def refined(self):
        return Grading(2 * self.panels, self.order, self.exponent)


DEFAULT_GRADING = Grading()


class ForcingSeries(object):
    """Field valued forcing, linear between sample nodes.

    :param grid: (Grid) The grid.
    :param times: (numpy.ndarray) Nodes, increasing.
    :param values: (numpy.ndarray) One flat row per node.
    :param vector: (bool) Rows are stacked vector fields.
    """
    def __init__(self, grid, times, values, vector=False):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.vector = vector

    def row(self, tau):
        """Interpolated flat values at tau (clamped to the node range)"""
        times = self.times
        idx = int(np.clip(np.searchsorted(times, tau) - 1, 0, len(times) - 2))
        width = times[idx + 1] - times[idx]
        frac = min(max((tau - times[idx]) / width, 0.0), 1.0)
        return (1.0 - frac) * self.values[idx] + frac * self.values[idx + 1]

    def __call__(self, tau):
        row = self.row(tau)
        if self.vector:
            return VectorField.from_stacked(self.grid, row)
        return ScalarField(self.grid, row)


def singular_kernel_integral(rate, theta, t):
    """int_0^t e^{a s} s^{-theta} ds in closed form via 1F1"""
    if theta >= 1:
        raise SingularityError("s^-{} is not integrable at 0".format(theta))
    one = 1.0 - theta
    return t ** one / one * hyp1f1(one, one + 1.0, rate * t)


def _lag_nodes(t, grading, breakpoints):
    graded = t * (np.arange(grading.panels + 1) / grading.panels) ** grading.exponent
    extra = [t - tau for tau in breakpoints if 0.0 < tau < t]
    return np.unique(np.concatenate([graded, extra]))


def duhamel(action, forcing, t, grading=DEFAULT_GRADING, breakpoints=()):
    """Product quadrature for int_0^t e^{a (t - tau)} S(t - tau) F(tau) dtau.

    The first lag panel [0, s_1] uses Gauss-Jacobi nodes for the weight
    s^{-theta}; all other panels use Gauss-Legendre nodes. ``breakpoints``
    (forcing nodes in tau) become panel boundaries so that piecewise smooth
    forcing is integrated panel by panel.

    :param action: (SemigroupAction) Kernel with rate a and exponent theta.
    :param forcing: (callable) tau -> field.
    :param t: (float) Upper limit, t >= 0.
    :param grading: (Grading) Panel layout.
    :returns: Field of the action's output type.
    :raises: SingularityError for theta >= 1.
    """
    validate_time(t)
    theta = action.theta
    if theta >= 1:
        raise SingularityError("Duhamel kernel exponent {} >= 1".format(theta))

    if t == 0:
        return action.zero(forcing(0.0))

    nodes = _lag_nodes(t, grading, breakpoints)
    jac_x, jac_w = roots_jacobi(grading.order, 0.0, -theta)
    leg_x, leg_w = roots_legendre(grading.order)

    first = nodes[1]
    scale = (first / 2.0) ** (1.0 - theta)
    total = None
    for x, w in zip(jac_x, jac_w):
        s = first * (x + 1.0) / 2.0
        term = action.regular(s, forcing(t - s)) * (scale * w)
        total = term if total is None else total + term

    for lo, hi in zip(nodes[1:-1], nodes[2:]):
        half = (hi - lo) / 2.0
        for x, w in zip(leg_x, leg_w):
            s = lo + half * (x + 1.0)
            total = total + action.apply(s, forcing(t - s)) * (half * w)

    return total


##########
# PICARD #
##########

@dataclass
class PicardDiagnostics(object):
    """Per-iteration measurements of a Picard run"""
    norms: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.distances)

    @property
    def last_ratio(self):
        return self.ratios[-1] if self.ratios else None

    def record(self, norm, distance, wall_ms):
        if self.distances:
            prev = self.distances[-1]
            self.ratios.append(distance / prev if prev > 0 else 0.0)

        self.norms.append(float(norm))
        self.distances.append(float(distance))
        self.wall_ms.append(wall_ms)

    def rows(self):
        """(iteration, distance, ratio or None, wall_ms or None) tuples"""
        for idx, dist in enumerate(self.distances):
            ratio = self.ratios[idx - 1] if idx > 0 else None
            yield idx + 1, dist, ratio, self.wall_ms[idx]


@dataclass(frozen=True)
class _Nodes(object):
    """Node arrays of all four unknowns, row 0 is tau = 0"""
    n: np.ndarray
    c: np.ndarray
    v: np.ndarray
    u: np.ndarray


def _require_finite(name, values, iteration):
    if not np.all(np.isfinite(values)):
        raise DivergenceError(
            "Non-finite values in {} at iteration {}".format(name, iteration),
            iteration=iteration,
        )


class MildProblem(object):
    """Everything fixed during one Picard run.

    Builds the modal propagators of the four equations on the node set
    {0} + times and precomputes the free (linear) parts.

    :param data: (InitialData) Initial values.
    :param params: (ModelParams) Coefficients.
    :param e: (ExponentTuple) Exponents, e.T is the horizon.
    :param engines: (Engines) Heat and Stokes engines (default: cached).
    :param times: (numpy.ndarray) Positive sample times (default: graded).
    """
    def __init__(self, data, params, e, engines=None, times=None):
        grid = data.grid
        if not is_solenoidal(data.u0):
            raise InvalidInputError("Initial velocity must be solenoidal")

        if params.phi_grad is not None and params.phi_grad.grid != grid:
            raise InvalidInputError("grad phi lives on a different grid")

        self.grid = grid
        self.data = data
        self.params = params
        self.e = e
        self.engines = engines or Engines.for_grid(grid)
        self.times = graded_time_grid(e.T) if times is None else np.asarray(times)
        self.nodes = np.concatenate([[0.0], self.times])

        heat, stokes = self.engines.heat, self.engines.stokes
        self._props = {
            "n": ModalPropagator(heat, params.sigma, self.nodes),
            "c": ModalPropagator(heat, -params.kappa1 * params.beta1, self.nodes),
            "v": ModalPropagator(heat, -params.beta2, self.nodes),
            "u": ModalPropagator(stokes, 0.0, self.nodes),
        }
        self._engine = {"n": heat, "c": heat, "v": heat, "u": stokes}
        self._free = {
            "n": self._props["n"].free(heat.coefficients(data.n0.values)),
            "c": self._props["c"].free(heat.coefficients(data.c0.values)),
            "v": self._props["v"].free(heat.coefficients(data.v0.values)),
            "u": self._props["u"].free(stokes.coefficients(data.u0.stacked())),
        }

        if params.phi_grad is None:
            self._phi = (np.zeros(grid.shape), np.zeros(grid.shape))
        else:
            self._phi = params.phi_grad.arrays()

        self._first = None

    def _solve(self, name, forcing):
        """Free part minus the Duhamel term for nodal forcing rows"""
        engine = self._engine[name]
        coeffs = self._free[name] - self._props[name].forced(
            engine.coefficients(forcing)
        )
        return engine.synthesize(coeffs)

    def first_nodes(self):
        """Node arrays of the linear flows, row 0 is the projected data"""
        if self._first is None:
            self._first = _Nodes(*(
                freeze(self._engine[name].synthesize(self._free[name]))
                for name in ("n", "c", "v", "u")
            ))
        return self._first

    def first_iterate(self):
        """The linear flows [n1, c1, v1, u1] of the initial data"""
        return self.to_trajectory(self.first_nodes())

    def to_trajectory(self, nodes):
        return Trajectory(
            self.grid, self.times, nodes.n[1:], nodes.c[1:], nodes.v[1:], nodes.u[1:]
        )

    def to_nodes(self, traj):
        first = self.first_nodes()
        return _Nodes(*(
            np.vstack([getattr(first, name)[:1], getattr(traj, name)])
            for name in ("n", "c", "v", "u")
        ))

    #################
    # NONLINEARITY  #
    #################

    def _shape(self, values):
        return values.reshape((-1,) + self.grid.shape)

    def _velocity(self, values):
        size = self.grid.size
        return self._shape(values[:, :size]), self._shape(values[:, size:])

    def _flat(self, values):
        return values.reshape(values.shape[0], -1)

    def _flux_div(self, f, wx, wy):
        fx, fy = faces_from_cells(f, f)
        return div_arrays(fx * wx, fy * wy, self.grid)

    def _advect(self, ux, uy, f):
        gx, gy = grad_arrays(f, self.grid)
        cx, cy = cells_from_faces(ux * gx, uy * gy)
        return cx + cy

    @staticmethod
    def _centred(values):
        return values - np.mean(values, axis=(-2, -1), keepdims=True)

    def forcing_n(self, n, c, v, ux, uy):
        """div(n u) + mu [n][n] + div(n (chi grad c - xi grad v))"""
        p = self.params
        gcx, gcy = grad_arrays(c, self.grid)
        gvx, gvy = grad_arrays(v, self.grid)
        return (
            self._flux_div(n, ux, uy) +
            p.mu * self._centred(n) * self._centred(n) +
            self._flux_div(n, p.chi * gcx - p.xi * gvx, p.chi * gcy - p.xi * gvy)
        )

    def forcing_u(self, n_new, ux, uy):
        weight = self.grid.weight
        rows = self._flat(n_new)
        star = np.array([
            row + optimal_shift(row, self.e.q, weight) for row in rows
        ])
        nx_faces, ny_faces = faces_from_cells(self._shape(star), self._shape(star))
        cx, cy = convect_arrays(ux, uy, self.grid)
        px, py = leray_arrays(
            cx + nx_faces * self._phi[0], cy + ny_faces * self._phi[1], self.grid
        )
        return np.hstack([self._flat(px), self._flat(py)])

    def apply_map(self, nodes, iteration=None, fresh_density=True):
        """One application of the fixed-point map.

        :param nodes: (_Nodes) Current iterate on all nodes.
        :param fresh_density: (bool) Feed the new n into c, v and u (the
                              Picard scheme); False feeds the old n
                              (the plain mild map, used for residuals).
        :returns _Nodes: The next iterate.
        """
        p = self.params
        n, c, v = self._shape(nodes.n), self._shape(nodes.c), self._shape(nodes.v)
        ux, uy = self._velocity(nodes.u)

        f_n = self.forcing_n(n, c, v, ux, uy)
        _require_finite("n forcing", f_n, iteration)
        n_new = self._solve("n", self._flat(f_n))
        _require_finite("n", n_new, iteration)

        density = self._shape(n_new) if fresh_density else n
        f_c = (
            self._advect(ux, uy, c) -
            p.kappa1 * p.alpha1 * density +
            p.kappa2 * p.gamma * self._centred(c) * self._centred(n)
        )
        c_new = self._solve("c", self._flat(f_c))
        _require_finite("c", c_new, iteration)

        f_v = self._advect(ux, uy, v) - p.alpha2 * density
        v_new = self._solve("v", self._flat(f_v))
        _require_finite("v", v_new, iteration)

        f_u = self.forcing_u(density, ux, uy)
        u_new = self._solve("u", f_u)
        _require_finite("u", u_new, iteration)

        # Row 0 is the initial state, never changed by the map.
        first = self.first_nodes()
        n_new[0] = first.n[0]
        c_new[0] = first.c[0]
        v_new[0] = first.v[0]
        u_new[0] = first.u[0]
        return _Nodes(n_new, c_new, v_new, u_new)


def picard_step(state, problem, iteration=None):
    """One Picard step [n, c, v, u]^(k) -> [n, c, v, u]^(k+1).

    :param state: (Trajectory) Current iterate on the problem's time grid.
    :param problem: (MildProblem) Data, parameters, exponents and engines.
    :param iteration: (int) Index reported with errors.
    :returns Trajectory: Next iterate.
    :raises: DivergenceError on NaN or overflow.
    """
    nodes = problem.apply_map(problem.to_nodes(state), iteration=iteration)
    return problem.to_trajectory(nodes)


def solve_mild(data, params, e, tol=DEFAULT_TOL, maxiter=DEFAULT_MAXITER,
               guard=DEFAULT_GUARD, engines=None, times=None, start=None,
               record_timings=False):
    """Run the Picard iteration until consecutive iterates are tol-close in Y.

    :param data: (InitialData) Initial values.
    :param params: (ModelParams) Coefficients.
    :param e: (ExponentTuple) Exponents; the horizon is e.T.
    :param tol: (float) Y-distance tolerance.
    :param maxiter: (int) Maximal number of Picard steps.
    :param guard: (float) Abort once an iterate's Y norm exceeds guard times
                  max(Y norm of the first iterate, X0).
    :param start: (Trajectory) Alternative first iterate.
    :param record_timings: (bool) Record wall times per step.
    :returns tuple: (Trajectory, PicardDiagnostics)
    :raises: DivergenceError, NonConvergenceError
    """
    validate_positive("tol", tol)
    problem = MildProblem(data, params, e, engines, times)
    current = start if start is not None else problem.first_iterate()

    x0 = x_components(data, e, problem.engines.heat)["X0"]
    base = max(y_norm(current, e)[0], x0, 1e-300)
    diag = PicardDiagnostics()

    for iteration in range(1, maxiter + 1):
        started = time.perf_counter()
        try:
            nxt = picard_step(current, problem, iteration)
        except DivergenceError as err:
            err.ratio, err.diagnostics = diag.last_ratio, diag
            raise

        distance = y_distance(nxt, current, e)
        norm = y_norm(nxt, e)[0]
        wall = (time.perf_counter() - started) * 1e3 if record_timings else None
        diag.record(norm, distance, wall)
        LOGGER.info(
            "Picard iteration %d: distance %.3e, norm %.3e, ratio %s",
            iteration, distance, norm, diag.last_ratio,
        )

        if not math.isfinite(norm) or norm > guard * base:
            raise DivergenceError(
                "Iterate norm {:.3e} exceeds the growth guard".format(norm),
                iteration=iteration, ratio=diag.last_ratio, diagnostics=diag,
            )

        current = nxt
        if distance < tol:
            diag.converged = True
            return current, diag

    raise NonConvergenceError(
        "No convergence after {} iterations (last ratio {})".format(
            maxiter, diag.last_ratio
        ),
        iteration=maxiter, ratio=diag.last_ratio, diagnostics=diag,
    )


def residual_check(traj, problem):
    """Y-component norms of traj minus the mild map applied to traj itself.

    Scalar components are compared as classes, u as plain fields.

    :returns dict: component -> weighted residual.
    """
    nodes = problem.apply_map(problem.to_nodes(traj), fresh_density=False)
    mapped = problem.to_trajectory(nodes)
    return y_norm(traj - mapped, problem.e)[1]


@dataclass(frozen=True)
class ContractionReport(object):
    ratio: float
    max_norm: float
    constant: float
    discriminant_ok: bool
    radius: float
    contracting: bool
    constant_spread: float
    correlation: float


def contraction_report(diag, x0):
    """Fit the geometric ratio of a Picard run and back-solve the constant.

    The ratio comes from a log-linear fit of the non-zero distances. With
    R the largest iterate norm, C = ratio / (4 R); the ball radius
    R = (1 - sqrt(1 - 80 X0 C^2)) / (40 C) exists when 80 X0 C^2 < 1.

    :param diag: (PicardDiagnostics) At least three iterations.
    :param x0: (float) The data constant X0.
    :returns ContractionReport: The fit.
    :raises: InsufficientDataError for fewer than three iterations.
    """
    if diag.iterations < 3:
        raise InsufficientDataError(
            "Contraction report needs 3 iterations, got {}".format(diag.iterations)
        )

    dists = np.asarray(diag.distances)
    idx = np.nonzero(dists > 0)[0]
    if len(idx) >= 2:
        slope, _, corr = log_linear_slope(idx, dists[idx])
        ratio = math.exp(slope)
    else:
        ratio, corr = 0.0, -1.0

    max_norm = max(diag.norms)
    constant = ratio / (4.0 * max_norm) if max_norm > 0 else 0.0
    disc = 1.0 - 80.0 * x0 * constant ** 2
    if constant == 0.0:
        radius = 0.0
    elif disc > 0:
        radius = (1.0 - math.sqrt(disc)) / (40.0 * constant)
    else:
        radius = float("nan")

    half = diag.iterations // 2
    per_step = [
        rat / (4.0 * norm)
        for rat, norm in zip(diag.ratios[max(half - 1, 0):], diag.norms[max(half, 1):])
        if norm > 0
    ]
    if per_step and np.mean(per_step) > 0:
        spread = float((max(per_step) - min(per_step)) / np.mean(per_step))
    else:
        spread = 0.0

    return ContractionReport(
        ratio=ratio,
        max_norm=max_norm,
        constant=constant,
        discriminant_ok=bool(disc > 0),
        radius=radius,
        contracting=bool(ratio < 1.0),
        constant_spread=spread,
        correlation=corr,
    )


def norm_rows(traj, e):
    """CSV rows (t, component, weighted norm) in time-major order"""
    samples = weighted_samples(traj, e)
    for idx, t in enumerate(traj.times):
        for name in ("n", "c", "v", "u"):
            yield float(t), name, float(samples[name][idx])
