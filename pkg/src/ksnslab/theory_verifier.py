#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Numerical checks of the decay estimates, the beta-integral bound, the
exponent conditions, the smallness threshold and the decay rates.

Constants of the decay estimates cannot be verified, only measured: every
estimate reports the envelope

    sup_{w, t} t^theta e^{gap t} ||S(t) w||_p / ||w||_q

over a corpus of fields and a time grid. Finiteness and stability of the
envelope under grid refinement is what is checked.
"""

# Stdlib:
import logging
import math

from dataclasses import dataclass, field

# External:
import numpy as np

from scipy.integrate import quad
from scipy.special import betaln
from scipy.stats import qmc

# Internal:
from ksnslab.errors import (
    BracketError, DivergenceError, InsufficientDataError, InvalidInputError,
    NonConvergenceError, SingularityError,
)
from ksnslab.mild_solver import Engines, InitialData, solve_mild
from ksnslab.norms import (
    graded_time_grid, lp_norm, lp_rows, optimal_shift, quotient_norm,
    sample_norms, x_norm,
)
from ksnslab.operators import (
    NEUMANN, STOKES, ScalarField, VectorField, curl, divergence,
    faces_from_cells, grad_arrays, leray_arrays, tensor_divergence,
)
from ksnslab.util import (
    log_linear_slope, ordered_map, reciprocal, validate_exponent,
    validate_positive,
)


LOGGER = logging.getLogger(__name__)

TAIL_WARN = 1e-3
MEAN_TOL = 1e-12
BLOCKS = 8


##########
# CORPUS #
##########

def _smooth_profile(rng, lx, ly, band=6, terms=6):
    modes = rng.integers(0, band + 1, size=(terms, 2))
    coeffs = rng.normal(size=terms)

    def profile(xs, ys):
        total = np.zeros(np.broadcast(xs, ys).shape)
        for (j, k), coeff in zip(modes, coeffs):
            total += coeff * np.cos(j * np.pi * xs / lx) * np.cos(k * np.pi * ys / ly)
        return total
    return profile


def _rough_profile(rng, lx, ly):
    blocks = rng.normal(size=(BLOCKS, BLOCKS))

    def profile(xs, ys):
        col = np.clip((xs / lx * BLOCKS).astype(int), 0, BLOCKS - 1)
        row = np.clip((ys / ly * BLOCKS).astype(int), 0, BLOCKS - 1)
        return blocks[row, col]
    return profile


def _bump_profile(rng, lx, ly):
    x0, y0 = rng.uniform(0.2, 0.8, size=2) * (lx, ly)
    width = rng.uniform(0.03, 0.1) * min(lx, ly)
    height = rng.choice((-1.0, 1.0)) * rng.uniform(0.5, 2.0)

    def profile(xs, ys):
        return height * np.exp(-((xs - x0) ** 2 + (ys - y0) ** 2) / (2 * width ** 2))
    return profile


def corpus_profiles(grid, seed, counts=(30, 10, 10)):
    """Profile functions (x, y) -> value drawn independently of the resolution"""
    rng = np.random.default_rng(seed)
    smooth, rough, bumps = counts
    profiles = [_smooth_profile(rng, grid.lx, grid.ly) for _ in range(smooth)]
    profiles += [_rough_profile(rng, grid.lx, grid.ly) for _ in range(rough)]
    profiles += [_bump_profile(rng, grid.lx, grid.ly) for _ in range(bumps)]
    return profiles


def _centred_field(grid, profile):
    values = ScalarField.from_function(grid, profile).values
    return ScalarField(grid, values - np.mean(values))


def make_corpus(grid, seed=0, kind="scalar", counts=(30, 10, 10)):
    """Build a deterministic corpus of test fields.

    :param grid: (Grid) The grid.
    :param seed: (int) Seed; the same seed gives the same profiles on every
                 resolution.
    :param kind: (str) ``scalar`` (mean free), ``vector`` (face averages of
                 two scalar profiles, zero wall flux), ``solenoidal`` (curl
                 of a profile sampled at the interior vertices) or
                 ``tensor`` (four scalar profiles at cell centres).
    :param counts: (tuple) Number of smooth, rough and bump profiles.
    :returns list: The fields.
    """
    profiles = corpus_profiles(grid, seed, counts)
    total = len(profiles)

    if kind == "scalar":
        return [_centred_field(grid, prof) for prof in profiles]

    if kind == "vector":
        corpus = []
        for idx, prof in enumerate(profiles):
            first = _centred_field(grid, prof).array()
            second = _centred_field(grid, profiles[(idx + 1) % total]).array()
            fx, fy = faces_from_cells(first, second)
            corpus.append(VectorField.from_arrays(grid, fx, fy))
        return corpus

    if kind == "solenoidal":
        xs, ys = grid.interior_nodes()
        return [curl(prof(xs, ys), grid) for prof in profiles]

    if kind == "tensor":
        return [
            tuple(
                _centred_field(grid, profiles[(idx + off) % total])
                for off in range(4)
            )
            for idx in range(total)
        ]

    raise InvalidInputError("Unknown corpus kind: {}".format(kind))


#############
# ESTIMATES #
#############

@dataclass(frozen=True)
class EstimateSpec(object):
    """How one decay estimate is measured"""
    engine_kind: str
    input_kind: str
    extra: float
    decays: bool
    quotient: bool = False
    mean_free: bool = False
    same_exponent: bool = False


ESTIMATES = {
    "C0": EstimateSpec(NEUMANN, "scalar", 0.0, True, mean_free=True),
    "C0q": EstimateSpec(NEUMANN, "scalar", 0.0, True, quotient=True),
    "C1": EstimateSpec(NEUMANN, "scalar", 0.5, False, same_exponent=True),
    "C2": EstimateSpec(NEUMANN, "scalar", 0.5, True),
    "C3": EstimateSpec(NEUMANN, "vector", 0.5, True),
    "C4": EstimateSpec(STOKES, "solenoidal", 0.0, True),
    "C5": EstimateSpec(STOKES, "solenoidal", 0.5, True),
    "C6": EstimateSpec(STOKES, "tensor", 0.5, True),
}


def estimate_exponent(estimate, p, q, N=2):
    """Singular time exponent theta of an estimate"""
    spec = ESTIMATES[estimate]
    if estimate == "C1":
        return 0.5
    return N / 2.0 * (reciprocal(q) - reciprocal(p)) + spec.extra


@dataclass(frozen=True)
class DecayEnvelopeReport(object):
    """Weighted ratios of one estimate over a corpus and a time grid.

    ``ratios`` has one row per kept sample; ``excluded`` lists the sample
    indices whose input norm vanished (0/0).
    """
    estimate: str
    p: float
    q: float
    times: np.ndarray
    ratios: np.ndarray
    envelope: float
    tail_energy: float
    excluded: list = field(default_factory=list)

    @property
    def sample_envelopes(self):
        return np.max(self.ratios, axis=1)


def _modal_rows(engine, values, times):
    coeffs = engine.coefficients(values)
    return engine.synthesize(coeffs[None, :] * np.exp(-np.outer(times, engine.eigenvalues)))


def _split(grid, rows):
    size = grid.size
    shape = (len(rows),) + grid.shape
    return rows[:, :size].reshape(shape), rows[:, size:].reshape(shape)


def _input_values(estimate, engine, sample):
    """Flat data the semigroup acts on for a corpus sample"""
    grid = engine.grid
    if estimate == "C3":
        return divergence(sample).values
    if estimate == "C6":
        arrays = [part.array() for part in sample]
        fx, fy = tensor_divergence(*arrays, grid=grid)
        px, py = leray_arrays(fx, fy, grid)
        return np.concatenate([px.ravel(), py.ravel()])
    if isinstance(sample, VectorField):
        return sample.stacked()
    return sample.values


def _output_magnitudes(estimate, grid, rows, q):
    if estimate in ("C0", "C3"):
        return np.abs(rows)
    if estimate == "C0q":
        return np.abs(np.array([
            row + optimal_shift(row, q, grid.weight) for row in rows
        ]))
    if estimate in ("C1", "C2"):
        gx, gy = grad_arrays(rows.reshape((-1,) + grid.shape), grid)
        return np.hypot(gx, gy).reshape(len(rows), -1)

    ux, uy = _split(grid, rows)
    if estimate in ("C4", "C6"):
        return np.hypot(ux, uy).reshape(len(rows), -1)

    gxx, gxy = grad_arrays(ux, grid)
    gyx, gyy = grad_arrays(uy, grid)
    mags = np.sqrt(gxx ** 2 + gxy ** 2 + gyx ** 2 + gyy ** 2)
    return mags.reshape(len(rows), -1)


def _input_norm(estimate, sample, q):
    if estimate == "C0q":
        return quotient_norm(sample, q)[0]
    return lp_norm(sample, q)


def verify_decay(engine, estimate, p, q, corpus, times=None, workers=1):
    """Measure the envelope of one decay estimate.

    :param engine: (SemigroupEngine) Heat engine for C0-C3, Stokes for C4-C6.
    :param estimate: (str) One of C0, C0q, C1 .. C6.
    :param p: (float) Output exponent.
    :param q: (float) Input exponent, q <= p (C1: q == p).
    :param corpus: (list) Fields of the estimate's input kind.
    :param times: (numpy.ndarray) Positive times (default: graded on [0, 1]).
    :param workers: (int) Thread count for the corpus map.
    :returns DecayEnvelopeReport: The measurement.
    :raises: InsufficientDataError for an empty corpus, InvalidInputError
             for wrong exponents, engines or non mean-free input.
    """
    if estimate not in ESTIMATES:
        raise InvalidInputError("Unknown estimate: {}".format(estimate))

    spec = ESTIMATES[estimate]
    validate_exponent(p)
    validate_exponent(q, "q")
    if q > p:
        raise InvalidInputError("Estimates need q <= p, got q={} p={}".format(q, p))
    if spec.same_exponent and p != q:
        raise InvalidInputError("{} compares equal exponents only".format(estimate))
    if engine.kind != spec.engine_kind:
        raise InvalidInputError(
            "{} needs a {} engine, got {}".format(estimate, spec.engine_kind, engine.kind)
        )
    if not corpus:
        raise InsufficientDataError("Decay verification needs a non-empty corpus")

    grid = engine.grid
    times = graded_time_grid(1.0) if times is None else np.asarray(times, dtype=float)
    theta = estimate_exponent(estimate, p, q)
    weight = times ** theta
    if spec.decays:
        weight = weight * np.exp(engine.gap * times)

    def measure(sample):
        if spec.mean_free:
            values = sample.values
            scale = max(1.0, float(np.max(np.abs(values))))
            if abs(np.mean(values)) > MEAN_TOL * scale:
                raise InvalidInputError("{} needs mean-free samples".format(estimate))

        denom = _input_norm(estimate, sample, q)
        if denom == 0.0:
            return None, 0.0

        data = _input_values(estimate, engine, sample)
        rows = _modal_rows(engine, data, times)
        numer = lp_rows(_output_magnitudes(estimate, grid, rows, q), p, grid.weight)
        return weight * numer / denom, engine.tail_energy(data)

    results = ordered_map(measure, corpus, workers)
    kept = [ratios for ratios, _ in results if ratios is not None]
    excluded = [idx for idx, (ratios, _) in enumerate(results) if ratios is None]
    tail = max(energy for _, energy in results)
    if tail > TAIL_WARN:
        LOGGER.warning("%s: truncation tail energy %.3e exceeds %.0e", estimate, tail, TAIL_WARN)

    if not kept:
        raise InsufficientDataError("Every corpus sample has a vanishing input norm")

    ratios = np.array(kept)
    if not np.all(np.isfinite(ratios)):
        raise InvalidInputError("{} produced non-finite ratios".format(estimate))

    envelope = float(np.max(ratios))
    LOGGER.info("%s (p=%s, q=%s): envelope %.6g over %d samples",
                estimate, p, q, envelope, len(kept))
    return DecayEnvelopeReport(
        estimate=estimate, p=p, q=q, times=times, ratios=ratios,
        envelope=envelope, tail_energy=tail, excluded=excluded,
    )


def envelope_stability(coarse, fine):
    """Relative change of the envelope from a coarse to a fine grid"""
    if coarse.envelope == 0.0:
        return 0.0 if fine.envelope == 0.0 else math.inf
    return abs(fine.envelope - coarse.envelope) / coarse.envelope


########
# BETA #
########

@dataclass(frozen=True)
class BetaCheck(object):
    """Beta-integral bound at one parameter point.

    ``rhs`` carries the factor e^{-min(a, b) t}; ``rhs_displayed`` is the
    t-free variant e^{-min(a, b)} t^{1-x-y} B(1-x, 1-y), kept for comparison.
    """
    x: float
    y: float
    a: float
    b: float
    t: float
    lhs: float
    rhs: float
    rhs_displayed: float
    passed: bool


def verify_beta_bound(x, y, a, b, t, quad_tol=1e-8):
    """Check int_0^t (t-s)^-x s^-y e^{-a (t-s)} e^{-b s} ds against the bound.

    The left side is integrated with the algebraic end-point weight
    s^{-y} (t - s)^{-x}, the beta function via its logarithm.

    :returns BetaCheck: passed if lhs <= rhs (1 + 10 quad_tol).
    :raises: SingularityError if x >= 1 or y >= 1.
    """
    if x >= 1 or y >= 1:
        raise SingularityError(
            "Beta integral diverges for x={} y={} (need both < 1)".format(x, y)
        )
    validate_positive("a", a)
    validate_positive("b", b)
    validate_positive("t", t)

    lhs, _ = quad(
        lambda s: math.exp(-a * (t - s) - b * s),
        0.0, t,
        weight="alg", wvar=(-y, -x),
        epsabs=0.0, epsrel=quad_tol, limit=200,
    )
    beta = math.exp(betaln(1.0 - x, 1.0 - y))
    power = t ** (1.0 - x - y)
    rhs = math.exp(-min(a, b) * t) * power * beta
    displayed = math.exp(-min(a, b)) * power * beta

    return BetaCheck(
        x=x, y=y, a=a, b=b, t=t, lhs=lhs, rhs=rhs, rhs_displayed=displayed,
        passed=bool(lhs <= rhs * (1.0 + 10.0 * quad_tol)),
    )


def latin_beta_grid(n=200, seed=0):
    """Latin hypercube points (x, y, a, b, t) in (-1,1)^2 x (0,5]^2 x (0,10]"""
    unit = qmc.LatinHypercube(d=5, seed=seed).random(n)
    points = np.empty_like(unit)
    points[:, 0] = -1.0 + 2.0 * unit[:, 0]
    points[:, 1] = -1.0 + 2.0 * unit[:, 1]
    points[:, 2] = 5.0 * (1.0 - unit[:, 2])
    points[:, 3] = 5.0 * (1.0 - unit[:, 3])
    points[:, 4] = 10.0 * (1.0 - unit[:, 4])
    return points


def run_beta_grid(n=200, seed=0, quad_tol=1e-8, workers=1):
    """verify_beta_bound over a Latin grid, ordered by point index"""
    points = latin_beta_grid(n, seed)
    return ordered_map(
        lambda row: verify_beta_bound(*row, quad_tol=quad_tol), points, workers
    )


#############
# EXPONENTS #
#############

@dataclass(frozen=True)
class Condition(object):
    text: str
    holds: bool
    label: str = ""


@dataclass(frozen=True)
class ConditionVerdict(object):
    """Result of checking an exponent tuple against a theorem case.

    ``passed`` depends on the case inequalities only; ``annotations`` holds
    the per-estimate conditions with the estimate they belong to.
    """
    theorem: str
    case: str
    exponents: object
    passed: bool
    violated: list
    annotations: list

    def render(self):
        lines = ["{} case ({}): {}".format(
            self.theorem, self.case, "PASS" if self.passed else "FAIL"
        )]
        lines += ["  violated: " + text for text in self.violated]
        for cond in self.annotations:
            lines.append("  [{}] {} {}".format(
                cond.label, cond.text, "ok" if cond.holds else "broken"
            ))
        return "\n".join(lines)


def _fmt(value):
    return "inf" if math.isinf(value) else "{:.6g}".format(value)


def _lt(left, right, text, strict=True):
    holds = left < right if strict else left <= right
    return Condition("{} ({} {} {})".format(
        text, _fmt(left), "<" if strict else "<=", _fmt(right)
    ), bool(holds))


def _upper(value, denom, numer, text):
    """value < numer / denom, with a non-positive denom meaning no bound"""
    if denom <= 0:
        return Condition("{} (no upper bound)".format(text), True)
    return _lt(value, numer / denom, text)


def _theorem_one(e, case):
    N, p, q, r, s = e.N, e.p, e.q, e.r, e.s
    si = reciprocal(s)
    conds = []
    if case == "i":
        conds.append(Condition("N = 3 (N = {})".format(N), N == 3))
        conds.append(_lt(N, s, "N <= s", strict=False))
        conds.append(_lt(N / 2.0, q, "N/2 < q"))
        conds.append(_lt(q, N, "q < N"))
        conds.append(_lt(N, p, "N < p"))
        conds.append(_upper(p, N + N * q * si - 2 * q, N * q, "p < Nqs/(Ns+Nq-2sq)"))
    elif case in ("ii", "iii"):
        conds.append(Condition("N = 2 (N = {})".format(N), N == 2))
        if case == "ii":
            conds.append(_lt(N, s, "N < s"))
            conds.append(Condition("s < inf ({})".format(_fmt(s)), not math.isinf(s)))
            conds.append(_lt(s / (s - 1.0) if s > 1 else math.inf, q,
                             "s/(s-1) <= q", strict=False))
        else:
            conds.append(Condition("s = inf ({})".format(_fmt(s)), math.isinf(s)))
            conds.append(_lt(N / 2.0, q, "N/2 < q"))
        conds.append(_lt(q, N, "q < N"))
        conds.append(_lt(q / (q - 1.0) if q > 1 else math.inf, p,
                         "q/(q-1) <= p", strict=False))
        conds.append(Condition("p < inf ({})".format(_fmt(p)), not math.isinf(p)))
    else:
        raise InvalidInputError("Unknown case tag for T1: {}".format(case))

    conds.append(_lt(N, r, "N < r"))
    conds.append(_upper(r, N - q, N * q, "r < Nq/(N-q)"))
    return conds


def _theorem_two(e, case):
    N, p, q, r = e.N, e.p, e.q, e.r
    if case == "i":
        if N == 2:
            return [Condition("case (i) unavailable for N=2", False)]
        return [
            _lt(N / 2.0, q, "N/2 < q"),
            _lt(q, N, "q < N"),
            _lt(N, p, "N < p"),
            _upper(p, N - q, N * q, "p < Nq/(N-q)"),
            _lt(N, r, "N < r"),
            _upper(r, N - q, N * q, "r < Nq/(N-q)"),
        ]
    if case == "ii":
        return [
            Condition("q = N ({} = {})".format(_fmt(q), N), q == N),
            _lt(N, p, "N < p"),
            Condition("p < inf ({})".format(_fmt(p)), not math.isinf(p)),
            _lt(N, r, "N < r"),
            Condition("r < inf ({})".format(_fmt(r)), not math.isinf(r)),
        ]
    if case == "iii":
        return [
            _lt(N, q, "N < q"),
            _lt(q, 2.0 * N, "q < 2N"),
            _lt(N, p, "N < p"),
            _upper(p, q - N, N * q, "p < Nq/(q-N)"),
            _lt(q, r, "q <= r", strict=False),
            _upper(r, q - N, N * q, "r < Nq/(q-N)"),
        ]
    raise InvalidInputError("Unknown case tag for T2: {}".format(case))


def _chain(label, conds):
    return [Condition(cond.text, cond.holds, label) for cond in conds]


def _theorem_one_chain(e):
    N, pi, qi, ri = e.N, reciprocal(e.p), reciprocal(e.q), reciprocal(e.r)
    si = reciprocal(e.s)
    return (
        _chain("no2", [
            _lt(pi + qi, 1.0, "1/p + 1/q <= 1", strict=False),
            _lt(0.0, 0.5 - N * pi / 2, "1/2 - N/(2p) > 0"),
            _lt(0.0, N / 2 * (pi + qi) - 0.5, "N/2 (1/p + 1/q) - 1/2 > 0"),
            _lt(0.0, 1 - N * qi / 2, "1 - N/(2q) > 0"),
            _lt(0.0, N * qi - 1, "N/q - 1 > 0"),
        ]) +
        _chain("no3", [
            _lt(qi + ri, 1.0, "1/q + 1/r <= 1", strict=False),
            _lt(0.0, 0.5 - N * ri / 2, "1/2 - N/(2r) > 0"),
            _lt(0.0, N / 2 * (qi + ri - 1.0 / N), "N/2 (1/q + 1/r - 1/N) > 0"),
        ]) +
        _chain("co1a", [
            _lt(pi + ri, 1.0, "1/p + 1/r <= 1", strict=False),
            _lt(0.0, 0.5 - N * pi / 2, "1/2 - N/(2p) > 0"),
            _lt(0.0, 0.5 - N / 2 * (qi - ri), "1/2 - N/2 (1/q - 1/r) > 0"),
        ]) +
        _chain("uo2", [
            _lt(si + qi, 1.0, "1/s + 1/q <= 1", strict=False),
            _lt(0.0, 1 - N / 2 * (qi + si - pi), "1 - N/2 (1/q + 1/s - 1/p) > 0"),
            _lt(0.0, N * qi / 2 + N * si / 2 - 0.5, "N/(2q) + N/(2s) - 1/2 > 0"),
        ])
    )


def _theorem_two_system(e):
    N, pi, qi, ri = e.N, reciprocal(e.p), reciprocal(e.q), reciprocal(e.r)
    return (
        _chain("no2z", [
            _lt(pi + qi, 1.0, "1/p + 1/q <= 1", strict=False),
            _lt(N * pi / 2, 0.5, "1/2 > N/(2p)"),
            _lt(0.5, N / 2 * (pi + qi), "N/2 (1/p + 1/q) > 1/2"),
        ]) +
        _chain("no3z", [
            _lt(qi + ri, 1.0, "1/q + 1/r <= 1", strict=False),
            _lt(0.0, 0.5 - N * ri / 2, "1/2 - N/(2r) > 0"),
            _lt(0.0, N / 2 * (qi + ri - 1.0 / N), "N/2 (1/q + 1/r - 1/N) > 0"),
        ]) +
        _chain("co1az", [
            _lt(0.0, 1 - N * qi / 2, "1 - N/(2q) > 0"),
            _lt(0.0, 0.5 - N * pi / 2, "1/2 - N/(2p) > 0"),
        ]) +
        _chain("co2z", [
            _lt(0.0, 0.5 - N * pi / 2, "1/2 - N/(2p) > 0"),
            _lt(0.0, 0.5 - N / 2 * (qi - ri), "1/2 - N/2 (1/q - 1/r) > 0"),
            _lt(e.q, e.r, "q <= r", strict=False),
        ]) +
        _chain("uo2z", [
            _lt(1.0 / N + qi, 1.0, "1/N + 1/q <= 1", strict=False),
            _lt(0.0, 0.5 - N * pi / 2, "1/2 - N/(2p) > 0"),
            _lt(0.0, 1 - N / 2 * (1.0 / N + qi - pi), "1 - N/2 (1/N + 1/q - 1/p) > 0"),
        ])
    )


def check_exponents(e, theorem, case):
    """Check an exponent tuple against one case of a theorem.

    :param e: (ExponentTuple) The tuple; s = inf uses 1/s = 0.
    :param theorem: (str) ``T1`` or ``T2``.
    :param case: (str) ``i``, ``ii`` or ``iii``.
    :returns ConditionVerdict: Pass flag, violated inequalities and the
                               per-estimate annotations.
    :raises: InvalidInputError for unknown tags.
    """
    if theorem == "T1":
        conds = _theorem_one(e, case)
        notes = _theorem_one_chain(e)
    elif theorem == "T2":
        conds = _theorem_two(e, case)
        notes = _theorem_two_system(e)
    else:
        raise InvalidInputError("Unknown theorem tag: {}".format(theorem))

    violated = [cond.text for cond in conds if not cond.holds]
    return ConditionVerdict(
        theorem=theorem, case=case, exponents=e, passed=not violated,
        violated=violated, annotations=notes,
    )


#############
# THRESHOLD #
#############

@dataclass(frozen=True)
class ThresholdResult(object):
    """Largest converging amplitude and the bisection trace.

    Each trace entry is (amplitude, converged, iterations, last ratio).
    """
    delta: float
    lo: float
    hi: float
    trace: list

    @property
    def width(self):
        return self.hi - self.lo


def unit_direction(data, e, engine):
    """Scale initial data to unit X norm"""
    norm = x_norm(data, e, engine)
    if norm == 0.0:
        raise InvalidInputError("Zero data has no direction")
    return data.scaled(1.0 / norm)


def threshold_search(params, e, direction, lo=0.0, hi=10.0, steps=10,
                     engines=None, **solver_kwargs):
    """Bisect the amplitude at which the Picard iteration stops converging.

    :param direction: (InitialData) Data of unit X norm.
    :param lo: (float) Amplitude that must converge.
    :param hi: (float) Amplitude that must not converge.
    :param steps: (int) Bisection steps; the bracket shrinks by 2^steps.
    :returns ThresholdResult: delta = largest converging amplitude tested.
    :raises: BracketError if lo fails or hi converges.
    """
    engines = engines or Engines.for_grid(direction.grid)
    norm = x_norm(direction, e, engines.heat)
    if abs(norm - 1.0) > 1e-6:
        raise InvalidInputError("Direction must have unit X norm, got {}".format(norm))

    trace = []

    def converges(amplitude):
        try:
            _, diag = solve_mild(
                direction.scaled(amplitude), params, e, engines=engines, **solver_kwargs
            )
            trace.append((amplitude, True, diag.iterations, diag.last_ratio))
            return True
        except (DivergenceError, NonConvergenceError) as err:
            trace.append((amplitude, False, err.iteration, err.ratio))
            return False

    if not converges(lo):
        raise BracketError("Lower amplitude {} does not converge".format(lo))
    if converges(hi):
        raise BracketError("Upper amplitude {} converges".format(hi))

    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if converges(mid):
            lo = mid
        else:
            hi = mid

    LOGGER.info("Threshold bracket [%.6g, %.6g] after %d steps", lo, hi, steps)
    return ThresholdResult(delta=lo, lo=lo, hi=hi, trace=trace)


#########
# RATES #
#########

@dataclass(frozen=True)
class RateFit(object):
    """Fitted exponential decay of one component.

    ``rate`` is the fitted decay rate of the plain norm, ``residual`` the
    part left after removing the predicted weight rate.
    """
    component: str
    rate: float
    predicted: float
    residual: float
    passed: bool
    skipped: bool = False


def fit_decay_rates(traj, e, rates, window=0.5, margin=0.1, min_samples=10):
    """Fit exponential decay rates of [n], [c], [v] and u.

    Norms: ||[n]||_q, ||[c]||_inf, ||[v]||_inf modulo constants and ||u||_p,
    fitted on the samples with t >= (1 - window) T.

    :param rates: (DecayRates) Predicted weights.
    :returns dict: component -> RateFit; zero components are skipped.
    :raises: InsufficientDataError for fewer than min_samples in the window.
    """
    times = traj.times
    mask = times >= (1.0 - window) * times[-1]
    if np.count_nonzero(mask) < min_samples:
        raise InsufficientDataError(
            "Rate fit needs {} samples in the window, got {}".format(
                min_samples, np.count_nonzero(mask)
            )
        )

    norms = sample_norms(traj, e)
    series = {"n": norms.n, "c": norms.c_class, "v": norms.v_class, "u": norms.u}
    predicted = rates.weights()
    fits = {}
    for name, values in series.items():
        window_values = values[mask]
        if np.all(window_values == 0.0):
            fits[name] = RateFit(name, 0.0, predicted[name], 0.0, True, skipped=True)
            continue

        if np.any(window_values <= 0.0):
            raise InsufficientDataError("Component {} vanishes inside the window".format(name))

        rate = -log_linear_slope(times[mask], window_values)[0]
        fits[name] = RateFit(
            component=name,
            rate=rate,
            predicted=predicted[name],
            residual=rate - predicted[name],
            passed=bool(rate >= predicted[name] * (1.0 - margin)),
        )

    return fits


def default_direction(grid, e, engine):
    """Smooth bump density of unit X norm, all other data zero"""
    bump = ScalarField.from_function(
        grid,
        lambda xs, ys: np.exp(-((xs - 0.5 * grid.lx) ** 2 + (ys - 0.5 * grid.ly) ** 2)
                              / (2 * (0.1 * min(grid.lx, grid.ly)) ** 2)),
    )
    zero = ScalarField.zeros(grid)
    data = InitialData(bump, zero, zero, VectorField.zeros(grid))
    return unit_direction(data, e, engine)
