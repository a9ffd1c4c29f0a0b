#!/usr/bin/env python
# -*- coding: utf-8 -*-


"""
General utils, mostly for validating numbers and mapping over samples.
"""

# Stdlib:
import math

from concurrent.futures import ThreadPoolExecutor

# External:
import numpy as np

# Internal:
from ksnslab.errors import InvalidInputError


def validate_positive(name, value, strict=True):
    """Check that a named parameter is a (strictly) positive finite number.

    :param name: (str) Name used in the error message.
    :param value: (float) The value to check.
    :param strict: (bool) Reject zero too if True.
    :raises: InvalidInputError if invalid.
    """
    if value is None or not math.isfinite(value):
        raise InvalidInputError(
            "{} must be finite, got {}".format(name, value), field=name
        )

    if strict and value <= 0:
        raise InvalidInputError(
            "{} must be positive, got {}".format(name, value), field=name
        )

    if not strict and value < 0:
        raise InvalidInputError(
            "{} must be non-negative, got {}".format(name, value), field=name
        )


def validate_exponent(p, name="p"):
    """Check that p is a Lebesgue exponent in [1, inf].

    :param p: (float) The exponent, ``math.inf`` is allowed.
    :raises: InvalidInputError if p < 1 or NaN.
    """
    if p is None or math.isnan(p) or p < 1:
        raise InvalidInputError(
            "Exponent {} must lie in [1, inf], got {}".format(name, p)
        )


def validate_time(t, strict=False):
    """Check a semigroup time argument.

    :param t: (float) The time.
    :param strict: (bool) If True, t = 0 is rejected as well.
    :raises: InvalidInputError for negative (or zero when strict) times.
    """
    if not math.isfinite(t):
        raise InvalidInputError("Time must be finite, got {}".format(t))

    if strict and t <= 0:
        raise InvalidInputError("Time must be positive, got {}".format(t))

    if t < 0:
        raise InvalidInputError("Time must be non-negative, got {}".format(t))


def reciprocal(value):
    """Return 1/value with the convention 1/inf = 0.

    :param value: (float) A positive number or ``math.inf``.
    :returns float: The reciprocal.
    """
    if math.isinf(value):
        return 0.0

    return 1.0 / value


def check_finite(name, values):
    """Raise InvalidInputError if an array contains NaN or inf.

    :param name: (str) Name used in the error message.
    :param values: (numpy.ndarray) The array to check.
    """
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("{} contains non-finite values".format(name))


def freeze(array):
    """Mark a numpy array read-only and return it"""
    array.flags.writeable = False
    return array


def log_linear_slope(xs, values):
    """Least squares slope of log(values) against xs.

    :param xs: (numpy.ndarray) Abscissae.
    :param values: (numpy.ndarray) Strictly positive ordinates.
    :returns tuple: (slope, intercept, correlation)
    """
    xs = np.asarray(xs, dtype=float)
    logs = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(xs, logs, 1)
    if len(xs) > 2 and np.std(logs) > 0 and np.std(xs) > 0:
        corr = float(np.corrcoef(xs, logs)[0, 1])
    else:
        corr = -1.0 if slope < 0 else 1.0

    return float(slope), float(intercept), corr


def ordered_map(func, items, workers=1):
    """Apply func to every item, possibly on a thread pool.

    The result list is always ordered like ``items``.

    :param func: (callable) Function of a single item.
    :param items: (iterable) The items.
    :param workers: (int) Thread count; 1 runs in the calling thread.
    :returns list: Results ordered by item index.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


class Singleton(type):
    """Singleton metaclass.

    Shamelessly stolen from SO:
    https://stackoverflow.com/questions/31875/is-there-a-simple-elegant-way-to-define-singletons
    """
    def __init__(cls, name, bases, dct):
        super(Singleton, cls).__init__(name, bases, dct)
        cls.instance = None

    def __call__(cls, *args, **kwargs):
        if cls.instance is None:
            cls.instance = super(Singleton, cls).__call__(*args, **kwargs)
        return cls.instance
