#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Command line front end.

Every subcommand reads a run configuration, writes its tables and a
``verdict.txt`` into the output directory and exits with 0 on success or
with the exit code of the error category otherwise.

.. code-block:: shell

    $ ksnslab check-exponents --config run.ini --out results/
    $ ksnslab simulate --config run.ini --out results/ --refine 2
"""

# Stdlib:
import argparse
import logging
import math
import sys

from dataclasses import dataclass

# External:
import numpy as np

# Internal:
from ksnslab.config import RunConfig, parse_config
from ksnslab.errors import (
    ConfigError, InsufficientDataError, InternalError, KsnsError,
    VerificationFailure,
)
from ksnslab.mild_solver import (
    Engines, check_potential_class, contraction_report, norm_rows, solve_mild,
)
from ksnslab.norms import COMPONENTS, x_components, y_norm, yexp_norm
from ksnslab.persist import (
    output_path, write_diagnostics, write_norms, write_rows, write_snapshot,
    write_verdict,
)
from ksnslab.semigroups import EngineCache
from ksnslab.theory_verifier import (
    ESTIMATES, check_exponents, envelope_stability, fit_decay_rates,
    make_corpus, run_beta_grid, threshold_search, unit_direction, verify_decay,
)


LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
STABILITY_LIMIT = 0.25


@dataclass
class Run(object):
    """Resolved inputs of one subcommand invocation"""
    config: RunConfig
    out: str

    def get(self, section, key, default=None):
        return self.config.get(section, key, default)

    def path(self, name):
        return output_path(self.out, name)

    def engines(self, grid):
        EngineCache().reload(self.config.engine_settings())
        return Engines.for_grid(grid)

    def verdict(self, lines, passed=True):
        text = write_verdict(self.path("verdict.txt"), lines)
        for line in lines:
            LOGGER.info("%s", line)
        if not passed:
            raise VerificationFailure(text.splitlines()[0])
        return 0


def _fmt(value):
    if value is None:
        return "-"
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return "{:.6g}".format(value)


############
# SIMULATE #
############

def _horizon(cfg, params, engines):
    if not params.long_horizon:
        return cfg.horizon()
    horizon = cfg.horizon(params.decay_rates(engines.stokes.gap))
    LOGGER.info("Long-horizon run up to T=%g", horizon)
    return horizon


def _solve(run):
    cfg = run.config
    grid = cfg.grid()
    params = cfg.model_params(grid)
    engines = run.engines(grid)
    horizon = _horizon(cfg, params, engines)
    e = cfg.exponents(horizon)
    data = cfg.initial_data(grid, engines.heat, horizon)
    traj, diag = solve_mild(
        data, params, e, engines=engines, times=cfg.time_grid(horizon),
        **cfg.solver_settings()
    )
    write_norms(run.path("norms.csv"), norm_rows(traj, e))
    write_diagnostics(run.path("diagnostics.csv"), diag)
    return data, params, e, engines, traj, diag


def _write_snapshots(run, traj):
    for wanted in run.get("run", "snapshot_times", ()):
        idx = int(np.argmin(np.abs(traj.times - wanted)))
        fields = {
            "n": traj.scalar("n", idx),
            "c": traj.scalar("c", idx),
            "v": traj.scalar("v", idx),
            "u": traj.velocity(idx),
        }
        for name, field in fields.items():
            write_snapshot(
                run.path("snapshot_{:04d}_{}.cnsm".format(idx, name)), field
            )


def cmd_simulate(run):
    """Solve the mild formulation and write norms, diagnostics, snapshots"""
    data, params, e, engines, traj, diag = _solve(run)
    _write_snapshots(run, traj)

    parts = x_components(data, e, engines.heat)
    potential = check_potential_class(params.phi_grad, e, traj.times)
    lines = [
        "CONVERGED iterations={} y_norm={}".format(
            diag.iterations, _fmt(y_norm(traj, e)[0])
        ),
        "X0={} X1={} X2={} X3={} X4={}".format(
            *(_fmt(parts[key]) for key in ("X0", "X1", "X2", "X3", "X4"))
        ),
        "potential t1_ok={} t2_ok={}".format(potential["t1_ok"], potential["t2_ok"]),
    ]

    try:
        report = contraction_report(diag, parts["X0"])
        lines.append("contraction ratio={} constant={} radius={} contracting={}".format(
            _fmt(report.ratio), _fmt(report.constant), _fmt(report.radius),
            report.contracting,
        ))
    except InsufficientDataError as err:
        LOGGER.debug("No contraction report: %s", err)

    if params.long_horizon:
        yexp = yexp_norm(traj, e, params.decay_rates(engines.stokes.gap))
        lines.append("yexp_norm={} growing={}".format(_fmt(yexp.total), yexp.growing))

    return run.verdict(lines)


##########
# VERIFY #
##########

def cmd_verify_decay(run):
    """Measure a decay envelope on the grid and on a refined grid"""
    cfg = run.config
    estimate = run.get("verify", "estimate")
    if estimate not in ESTIMATES:
        raise ConfigError("Unknown estimate {}; choose from {}".format(
            estimate, ", ".join(sorted(ESTIMATES))
        ))

    spec = ESTIMATES[estimate]
    p, q = run.get("verify", "p"), run.get("verify", "q")
    times = cfg.time_grid(run.get("verify", "horizon"))
    coarse = cfg.grid()
    grids = (coarse, coarse.refined(run.get("verify", "fine_factor")))

    EngineCache().reload(cfg.engine_settings())
    reports, rows = [], []
    for grid in grids:
        corpus = make_corpus(grid, run.get("run", "seed"), spec.input_kind)
        report = verify_decay(
            EngineCache().get(grid, spec.engine_kind), estimate, p, q, corpus,
            times=times, workers=run.get("run", "workers"),
        )
        kept = [idx for idx in range(len(corpus)) if idx not in report.excluded]
        for sample, ratios in zip(kept, report.ratios):
            rows.extend((grid.nx, sample, t, ratio) for t, ratio in zip(times, ratios))
        reports.append(report)

    write_rows(run.path("decay.csv"), ("nx", "sample", "t", "ratio"), rows)
    stability = envelope_stability(*reports)
    passed = all(math.isfinite(rep.envelope) for rep in reports) and \
        stability <= STABILITY_LIMIT
    if stability > STABILITY_LIMIT:
        LOGGER.warning("%s envelope changed by %.1f%% under refinement",
                       estimate, 100 * stability)

    return run.verdict([
        "{} {} p={} q={}".format(estimate, "PASS" if passed else "FAIL", _fmt(p), _fmt(q)),
        "envelope coarse={} fine={} change={}".format(
            _fmt(reports[0].envelope), _fmt(reports[1].envelope), _fmt(stability)
        ),
        "excluded samples={}".format(sum(len(rep.excluded) for rep in reports)),
    ], passed)


def cmd_verify_beta(run):
    """Check the beta-integral bound on a Latin hypercube grid"""
    checks = run_beta_grid(
        n=run.get("verify", "beta_points"),
        seed=run.get("run", "seed"),
        quad_tol=run.get("verify", "quad_tol"),
        workers=run.get("run", "workers"),
    )
    write_rows(
        run.path("beta.csv"),
        ("x", "y", "a", "b", "t", "lhs", "rhs", "rhs_displayed", "passed"),
        ((chk.x, chk.y, chk.a, chk.b, chk.t, chk.lhs, chk.rhs,
          chk.rhs_displayed, chk.passed) for chk in checks),
    )

    passed = sum(chk.passed for chk in checks)
    displayed = sum(chk.lhs <= chk.rhs_displayed for chk in checks)
    return run.verdict([
        "beta {} {}/{}".format(
            "PASS" if passed == len(checks) else "FAIL", passed, len(checks)
        ),
        "t-free bound holds at {}/{} points".format(displayed, len(checks)),
    ], passed == len(checks))


def cmd_check_exponents(run):
    """Check the configured exponents against a theorem case"""
    verdict = check_exponents(
        run.config.exponents(), run.get("run", "theorem"), run.get("run", "case")
    )
    return run.verdict(verdict.render().splitlines(), verdict.passed)


def cmd_threshold_search(run):
    """Bisect the smallness threshold along the configured data direction"""
    cfg = run.config
    grid = cfg.grid()
    params = cfg.model_params(grid)
    engines = run.engines(grid)
    horizon = _horizon(cfg, params, engines)
    e = cfg.exponents(horizon)
    data = cfg.initial_data(grid, engines.heat, horizon)
    direction = unit_direction(data, e, engines.heat)

    result = threshold_search(
        params, e, direction,
        lo=run.get("threshold", "lo"),
        hi=run.get("threshold", "hi"),
        steps=run.get("threshold", "steps"),
        engines=engines,
        times=cfg.time_grid(horizon),
        **cfg.solver_settings()
    )
    write_rows(
        run.path("threshold.csv"),
        ("amplitude", "converged", "iterations", "ratio"),
        result.trace,
    )
    return run.verdict([
        "threshold delta={} bracket=[{}, {}]".format(
            _fmt(result.delta), _fmt(result.lo), _fmt(result.hi)
        ),
    ])


def cmd_fit_rates(run):
    """Fit exponential decay rates of a long-horizon run"""
    cfg = run.config
    params = cfg.model_params(cfg.grid())
    if not params.long_horizon:
        raise ConfigError(
            "fit-rates needs theorem = T2 or experimental_decay = true"
        )

    _, params, e, engines, traj, _ = _solve(run)
    rates = params.decay_rates(engines.stokes.gap)
    fits = fit_decay_rates(traj, e, rates)
    yexp = yexp_norm(traj, e, rates)

    write_rows(
        run.path("rates.csv"),
        ("component", "rate", "predicted", "residual", "passed", "skipped"),
        ((fit.component, fit.rate, fit.predicted, fit.residual, fit.passed,
          fit.skipped) for fit in (fits[name] for name in COMPONENTS)),
    )

    passed = all(fit.passed for fit in fits.values())
    lines = ["rates {}".format("PASS" if passed else "FAIL")]
    lines += [
        "  {} rate={} predicted={}{}".format(
            fit.component, _fmt(fit.rate), _fmt(fit.predicted),
            " (skipped)" if fit.skipped else "",
        )
        for fit in (fits[name] for name in COMPONENTS)
    ]
    lines.append("yexp_norm={} growing={}".format(_fmt(yexp.total), yexp.growing))
    return run.verdict(lines, passed)


COMMANDS = {
    "simulate": cmd_simulate,
    "verify-decay": cmd_verify_decay,
    "verify-beta": cmd_verify_beta,
    "check-exponents": cmd_check_exponents,
    "threshold-search": cmd_threshold_search,
    "fit-rates": cmd_fit_rates,
}


########
# MAIN #
########

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration (defaults if omitted)")
    common.add_argument("--out", default="out", help="Output directory")
    common.add_argument("--seed", type=int, help="Override [run] seed")
    common.add_argument(
        "--refine", type=int, default=1,
        help="Multiply grid cells and time samples by this factor",
    )
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(
        prog="ksnslab",
        description="Mild solutions of a chemotaxis-Navier-Stokes system",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, func in COMMANDS.items():
        sub.add_parser(name, help=func.__doc__, parents=[common])
    return parser


def _setup_logging(args):
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv=None):
    """Entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    if args.refine < 1:
        LOGGER.error("config: --refine must be a positive integer")
        return ConfigError.exit_code

    run = None
    try:
        config = parse_config(args.config) if args.config else RunConfig.defaults()
        config = config.with_overrides(seed=args.seed, refine=args.refine)
        LOGGER.debug("Effective configuration:\n%s", config.dump())
        run = Run(config, args.out)
        return COMMANDS[args.command](run)
    except VerificationFailure as err:
        LOGGER.error("%s: %s", err.category, err)
        return err.exit_code
    except KsnsError as err:
        LOGGER.error("%s: %s", err.category, err)
        if run is not None:
            write_verdict(run.path("verdict.txt"), ["FAIL {}: {}".format(err.category, err)])
        return err.exit_code
    except Exception:  # pylint: disable=broad-except
        LOGGER.exception("Unexpected failure")
        return InternalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
