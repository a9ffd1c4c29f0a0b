#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Run configuration.

A run is described by an INI file with the sections ``[grid]``,
``[exponents]``, ``[model]``, ``[data]``, ``[solver]``, ``[verify]``,
``[threshold]`` and ``[run]``. Every key has a documented default; keys
that are not documented are rejected with their line number.

Initial data and the potential gradient are given as named profiles,
for example ``n0 = gaussian x0=0.5 y0=0.5 width=0.1``.

Basic usage example:

.. code-block:: python

    >>> cfg = parse_config("run.ini")
    >>> grid = cfg.grid()
    >>> data = cfg.initial_data(grid)
"""

# Stdlib:
import configparser
import io
import logging
import math
import os

from dataclasses import dataclass

# External:
import numpy as np

# Internal:
from ksnslab.errors import ConfigError, InvalidInputError, KsnsError
from ksnslab.mild_solver import InitialData, ModelParams
from ksnslab.norms import ExponentTuple, graded_time_grid, x_norm
from ksnslab.operators import (
    ScalarField, VectorField, build_grid, curl, gradient,
)
from ksnslab.persist import read_snapshot


LOGGER = logging.getLogger(__name__)


def _as_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: {}".format(text))


def _as_float(text):
    lowered = text.strip().lower()
    if lowered in ("inf", "infinity", "+inf"):
        return math.inf
    return float(text)


def _as_int(text):
    value = float(text)
    if value != int(value):
        raise ValueError("not an integer: {}".format(text))
    return int(value)


def _as_times(text):
    if not text.strip():
        return ()
    return tuple(float(part) for part in text.replace(",", " ").split())


# section -> key -> (converter, default)
SCHEMA = {
    "grid": {
        "lx": (_as_float, 1.0),
        "ly": (_as_float, 1.0),
        "nx": (_as_int, 32),
        "ny": (_as_int, 32),
    },
    "exponents": {
        "N": (_as_int, 2),
        "p": (_as_float, 4.0),
        "q": (_as_float, 1.5),
        "r": (_as_float, 4.0),
        "s": (_as_float, math.inf),
        "T": (_as_float, 1.0),
    },
    "model": {
        "chi": (_as_float, 1.0),
        "xi": (_as_float, 1.0),
        "alpha1": (_as_float, 1.0),
        "alpha2": (_as_float, 1.0),
        "beta1": (_as_float, 1.0),
        "beta2": (_as_float, 1.0),
        "gamma": (_as_float, 1.0),
        "sigma": (_as_float, 0.0),
        "mu": (_as_float, 1.0),
        "kappa1": (_as_float, 1),
        "kappa2": (_as_float, 0),
        "experimental_decay": (_as_bool, False),
    },
    "data": {
        "n0": (str, "gaussian"),
        "c0": (str, "zero"),
        "v0": (str, "zero"),
        "u0": (str, "zero"),
        "phi": (str, "gravity gx=0 gy=-1"),
        "amplitude": (_as_float, 1.0),
        "normalize": (_as_bool, False),
    },
    "solver": {
        "tol": (_as_float, 1e-6),
        "maxiter": (_as_int, 40),
        "guard": (_as_float, 1e6),
        "kmax": (_as_int, 256),
        "kmax_stokes": (_as_int, 128),
        "n_log": (_as_int, 40),
        "n_lin": (_as_int, 24),
    },
    "verify": {
        "estimate": (str, "C0"),
        "p": (_as_float, math.inf),
        "q": (_as_float, 2.0),
        "horizon": (_as_float, 1.0),
        "quad_tol": (_as_float, 1e-8),
        "beta_points": (_as_int, 200),
        "fine_factor": (_as_int, 2),
    },
    "threshold": {
        "lo": (_as_float, 0.0),
        "hi": (_as_float, 10.0),
        "steps": (_as_int, 10),
    },
    "run": {
        "theorem": (str, "T1"),
        "case": (str, "iii"),
        "seed": (_as_int, 0),
        "record_timings": (_as_bool, False),
        "snapshot_times": (_as_times, ()),
        "workers": (_as_int, 1),
    },
}


def _key_lines(text):
    """Map (section, key) to the line number it appears on"""
    lines = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            lines[(section, None)] = lineno
            continue
        for sep in ("=", ":"):
            if sep in stripped:
                lines[(section, stripped.split(sep, 1)[0].strip())] = lineno
                break
    return lines


def _defaults():
    return {
        section: {key: default for key, (_, default) in keys.items()}
        for section, keys in SCHEMA.items()
    }


def parse_text(text, source="<string>"):
    """Parse and validate configuration text.

    :param text: (str) INI text.
    :param source: (str) Name used in error messages.
    :returns RunConfig: Validated config with defaults filled in.
    :raises: ConfigError with the offending line for unknown or bad keys.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError("{}: {}".format(source, err))

    lines = _key_lines(text)
    cfg = _defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError("{}:{}: unknown section [{}]".format(
                source, lines.get((section, None), "?"), section
            ))

        for key, raw in parser.items(section):
            where = "{}:{}".format(source, lines.get((section, key), "?"))
            if key not in SCHEMA[section]:
                raise ConfigError("{}: unknown key '{}' in [{}]".format(
                    where, key, section
                ))

            convert = SCHEMA[section][key][0]
            try:
                cfg[section][key] = convert(raw)
            except ValueError as err:
                raise ConfigError("{}: invalid value for {}.{}: {}".format(
                    where, section, key, err
                ))

    # Pure-decay mode has no logistic term unless mu is given explicitly.
    if cfg["run"]["theorem"] == "T2" and ("model", "mu") not in lines:
        cfg["model"]["mu"] = 0.0

    config = RunConfig(cfg, source, lines)
    config.validate()
    return config


def parse_config(path):
    """Read and validate a configuration file.

    :param path: (str) Path to the INI file.
    :returns RunConfig: The config.
    :raises: ConfigError if the file is unreadable or invalid.
    """
    try:
        with open(path, "r") as handle:
            text = handle.read()
    except OSError as err:
        raise ConfigError("Cannot read config {}: {}".format(path, err))

    return parse_text(text, source=str(path))


############
# PROFILES #
############

def parse_profile(spec):
    """Split ``name key=value ...`` into the name and a dict of values"""
    parts = spec.split()
    if not parts:
        raise ConfigError("Empty profile specification")

    params = {}
    for part in parts[1:]:
        if "=" not in part:
            raise ConfigError("Bad profile argument '{}' in '{}'".format(part, spec))
        key, value = part.split("=", 1)
        params[key] = value
    return parts[0], params


def _numbers(name, params, **defaults):
    unknown = set(params) - set(defaults)
    if unknown:
        raise ConfigError("Profile {} got unknown arguments: {}".format(
            name, ", ".join(sorted(unknown))
        ))

    values = dict(defaults)
    try:
        for key, raw in params.items():
            values[key] = float(raw)
    except ValueError as err:
        raise ConfigError("Profile {}: {}".format(name, err))
    return values


def _snapshot(params, grid, vector):
    if set(params) != {"path"}:
        raise ConfigError("Profile snapshot needs exactly path=")
    field = read_snapshot(params["path"])
    if field.grid != grid:
        raise ConfigError("Snapshot {} was written on {}, run grid is {}".format(
            params["path"], field.grid, grid
        ))
    if isinstance(field, VectorField) != vector:
        raise ConfigError("Snapshot {} has the wrong field kind".format(params["path"]))
    return field


def scalar_profile(grid, spec):
    """Build a scalar field from a named profile"""
    name, params = parse_profile(spec)
    if name == "zero":
        _numbers(name, params)
        return ScalarField.zeros(grid)

    if name == "constant":
        vals = _numbers(name, params, value=1.0)
        return ScalarField.constant(grid, vals["value"])

    if name == "cosine":
        vals = _numbers(name, params, j=1.0, k=0.0, amplitude=1.0)
        return ScalarField.from_function(
            grid,
            lambda xs, ys: vals["amplitude"] *
            np.cos(vals["j"] * np.pi * xs / grid.lx) *
            np.cos(vals["k"] * np.pi * ys / grid.ly),
        )

    if name == "gaussian":
        vals = _numbers(
            name, params, x0=0.5 * grid.lx, y0=0.5 * grid.ly,
            width=0.1 * min(grid.lx, grid.ly), amplitude=1.0,
        )
        return ScalarField.from_function(
            grid,
            lambda xs, ys: vals["amplitude"] * np.exp(
                -((xs - vals["x0"]) ** 2 + (ys - vals["y0"]) ** 2) /
                (2.0 * vals["width"] ** 2)
            ),
        )

    if name == "snapshot":
        return _snapshot(params, grid, vector=False)

    raise ConfigError("Unknown scalar profile: {}".format(name))


def velocity_profile(grid, spec):
    """Build a solenoidal velocity from a named profile"""
    name, params = parse_profile(spec)
    if name == "zero":
        _numbers(name, params)
        return VectorField.zeros(grid)

    if name == "vortex":
        vals = _numbers(name, params, amplitude=1.0)
        xs, ys = grid.interior_nodes()
        psi = vals["amplitude"] * (
            np.sin(np.pi * xs / grid.lx) ** 2 * np.sin(np.pi * ys / grid.ly) ** 2
        )
        return curl(psi, grid)

    if name == "snapshot":
        return _snapshot(params, grid, vector=True)

    raise ConfigError("Unknown velocity profile: {}".format(name))


def potential_profile(grid, spec):
    """Build the potential gradient grad phi from a named profile"""
    name, params = parse_profile(spec)
    if name == "zero":
        _numbers(name, params)
        return VectorField.zeros(grid)

    if name == "gravity":
        vals = _numbers(name, params, gx=0.0, gy=-1.0)
        return gradient(ScalarField.from_function(
            grid, lambda xs, ys: vals["gx"] * xs + vals["gy"] * ys
        ))

    if name == "snapshot":
        return _snapshot(params, grid, vector=True)

    raise ConfigError("Unknown potential profile: {}".format(name))


##############
# RUN CONFIG #
##############

@dataclass
class RunConfig(object):
    """Normalized configuration of one run.

    ``cfg`` is a nested dict section -> key -> value with every default
    filled in; the accessors below turn it into library objects.
    """
    cfg: dict
    source: str = "<defaults>"
    lines: dict = None

    @classmethod
    def defaults(cls):
        return cls(_defaults())

    def section(self, name):
        return self.cfg.get(name, {})

    def get(self, section, key, default=None):
        return self.cfg.get(section, {}).get(key, default)

    def _line(self, section, key):
        return (self.lines or {}).get((section, key), "?")

    def validate(self):
        """Build every derived object once so errors surface at load time"""
        if self.get("run", "theorem") not in ("T1", "T2"):
            raise ConfigError("{}:{}: theorem must be T1 or T2".format(
                self.source, self._line("run", "theorem")
            ))

        for key in ("n0", "c0", "v0", "u0", "phi"):
            name, params = parse_profile(self.get("data", key))
            if name == "snapshot" and not os.path.exists(params.get("path", "")):
                raise ConfigError("{}:{}: snapshot file not found: {}".format(
                    self.source, self._line("data", key), params.get("path")
                ))

        try:
            grid = self.grid()
            self.exponents()
            self.model_params(grid)
        except KsnsError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError("{}: {}".format(self.source, err))

    def with_overrides(self, seed=None, refine=None):
        """Copy with the command line seed and refinement applied"""
        cfg = {section: dict(values) for section, values in self.cfg.items()}
        if seed is not None:
            cfg["run"]["seed"] = int(seed)
        if refine is not None and refine != 1:
            for key in ("nx", "ny"):
                cfg["grid"][key] = cfg["grid"][key] * int(refine)
            for key in ("n_log", "n_lin"):
                cfg["solver"][key] = cfg["solver"][key] * int(refine)
        return RunConfig(cfg, self.source, self.lines)

    def grid(self):
        grid = self.section("grid")
        return build_grid(
            grid.get("lx", 1.0), grid.get("ly", 1.0),
            grid.get("nx", 32), grid.get("ny", 32),
        )

    def horizon(self, rates=None):
        """Horizon of the run.

        An explicit ``[exponents] T`` always wins. Otherwise decaying runs
        (``rates`` given) use the long horizon of their slowest rate.

        :param rates: (DecayRates) Rates of a long-horizon run, or None.
        :returns float: The horizon.
        """
        default = self.get("exponents", "T", 1.0)
        if rates is None or ("exponents", "T") in (self.lines or {}):
            return default
        long_horizon = rates.horizon()
        return default if long_horizon is None else long_horizon

    def exponents(self, horizon=None):
        exp = self.section("exponents")
        return ExponentTuple(
            N=exp.get("N", 2), p=exp.get("p", 4.0), q=exp.get("q", 1.5),
            r=exp.get("r", 4.0), s=exp.get("s", math.inf),
            T=exp.get("T", 1.0) if horizon is None else horizon,
        )

    def model_params(self, grid):
        model = self.section("model")
        for key in ("kappa1", "kappa2"):
            if model.get(key) not in (0, 1):
                raise ConfigError("{}:{}: {}: switch must be 0 or 1".format(
                    self.source, self._line("model", key), key
                ))

        try:
            return ModelParams(
                chi=model.get("chi", 1.0),
                xi=model.get("xi", 1.0),
                alpha1=model.get("alpha1", 1.0),
                alpha2=model.get("alpha2", 1.0),
                beta1=model.get("beta1", 1.0),
                beta2=model.get("beta2", 1.0),
                gamma=model.get("gamma", 1.0),
                sigma=model.get("sigma", 0.0),
                mu=model.get("mu", 1.0),
                kappa1=int(model.get("kappa1", 1)),
                kappa2=int(model.get("kappa2", 0)),
                phi_grad=potential_profile(grid, self.get("data", "phi", "zero")),
                theorem=self.get("run", "theorem", "T1"),
                experimental_decay=model.get("experimental_decay", False),
            )
        except InvalidInputError as err:
            section = "run" if err.field == "theorem" else "model"
            raise ConfigError("{}:{}: {}".format(
                self.source, self._line(section, err.field), err
            ))

    def initial_data(self, grid, engine=None, horizon=None):
        """Initial data from the [data] profiles, scaled by amplitude.

        With ``normalize = true`` the profiles are first scaled to unit X
        norm, which needs the Neumann engine of the grid. ``horizon`` overrides
        the T of that norm.
        """
        data = self.section("data")
        try:
            initial = InitialData(
                scalar_profile(grid, data.get("n0", "zero")),
                scalar_profile(grid, data.get("c0", "zero")),
                scalar_profile(grid, data.get("v0", "zero")),
                velocity_profile(grid, data.get("u0", "zero")),
            )
        except KsnsError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError("{}: data: {}".format(self.source, err))

        if data.get("normalize", False):
            if engine is None:
                raise ConfigError("normalize = true needs a heat engine")
            norm = x_norm(initial, self.exponents(horizon), engine)
            if norm == 0.0:
                raise ConfigError("{}: cannot normalize zero data".format(self.source))
            initial = initial.scaled(1.0 / norm)

        return initial.scaled(data.get("amplitude", 1.0))

    def solver_settings(self):
        """Keyword arguments for solve_mild"""
        solver = self.section("solver")
        return {
            "tol": solver.get("tol", 1e-6),
            "maxiter": solver.get("maxiter", 40),
            "guard": solver.get("guard", 1e6),
            "record_timings": self.get("run", "record_timings", False),
        }

    def engine_settings(self):
        solver = self.section("solver")
        return {
            "kmax": solver.get("kmax", 256),
            "kmax_stokes": solver.get("kmax_stokes", 128),
        }

    def time_grid(self, horizon=None):
        solver = self.section("solver")
        horizon = self.exponents().T if horizon is None else horizon
        return graded_time_grid(
            horizon, solver.get("n_log", 40), solver.get("n_lin", 24)
        )

    def dump(self):
        """Normalized INI text with every key"""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, keys in SCHEMA.items():
            parser.add_section(section)
            for key in keys:
                value = self.cfg[section][key]
                if isinstance(value, tuple):
                    value = " ".join(repr(float(item)) for item in value)
                elif isinstance(value, float):
                    value = "inf" if math.isinf(value) else repr(value)
                parser.set(section, key, str(value).lower()
                           if isinstance(value, bool) else str(value))

        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()
