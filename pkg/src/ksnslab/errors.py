#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Errors used throughout the library.

Every error carries a stable ``category`` string and a unique process
``exit_code``; the command line front end reports both.
"""


class KsnsError(Exception):
    """Base class of all errors raised on purpose by ksnslab"""
    category = "internal"
    exit_code = 1


class InternalError(KsnsError):
    """Raised when the implementation got confused.
    This should only happen if some computed quantity violates an
    invariant that the code itself guarantees.
    """
    category = "internal"
    exit_code = 1


class ConfigError(KsnsError):
    """Raised for missing, unknown or invalid configuration keys"""
    category = "config"
    exit_code = 2


class InvalidInputError(KsnsError, ValueError):
    """Raised when a field, grid or parameter violates a precondition"""
    category = "invalid-input"
    exit_code = 3

    def __init__(self, message, field=None):
        super(InvalidInputError, self).__init__(message)
        self.field = field


class EigensolverError(KsnsError):
    """Raised when an eigen-decomposition fails"""
    category = "eigensolver"
    exit_code = 4


class PoissonError(KsnsError):
    """Raised when the Neumann-Poisson solve of the Leray projection fails"""
    category = "poisson"
    exit_code = 5


class ProblemTooLargeError(KsnsError):
    """Raised when a dense computation is requested on a too large grid"""
    category = "too-large"
    exit_code = 6


class SingularityError(KsnsError):
    """Raised when a non-integrable endpoint singularity is requested"""
    category = "singularity"
    exit_code = 7


class _IterationError(KsnsError):
    """Common base for errors that abort a Picard run"""
    def __init__(self, message, iteration=None, ratio=None, diagnostics=None):
        super(_IterationError, self).__init__(message)
        self.iteration = iteration
        self.ratio = ratio
        self.diagnostics = diagnostics


class DivergenceError(_IterationError):
    """Raised when iterates blow up (NaN, overflow or growth guard)"""
    category = "divergence"
    exit_code = 8


class NonConvergenceError(_IterationError):
    """Raised when the iteration hits maxiter without meeting the tolerance"""
    category = "non-convergence"
    exit_code = 9


class BracketError(KsnsError):
    """Raised when a threshold bracket does not bracket anything"""
    category = "bracket"
    exit_code = 10


class InsufficientDataError(KsnsError):
    """Raised when a fit or report gets too few samples"""
    category = "insufficient-data"
    exit_code = 11


class SnapshotFormatError(KsnsError):
    """Raised when a field snapshot file is malformed"""
    category = "snapshot-format"
    exit_code = 12


class VerificationFailure(KsnsError):
    """Raised by the command line when a check does not pass"""
    category = "verification-failed"
    exit_code = 13


ALL_ERRORS = (
    InternalError,
    ConfigError,
    InvalidInputError,
    EigensolverError,
    PoissonError,
    ProblemTooLargeError,
    SingularityError,
    DivergenceError,
    NonConvergenceError,
    BracketError,
    InsufficientDataError,
    SnapshotFormatError,
    VerificationFailure,
)
