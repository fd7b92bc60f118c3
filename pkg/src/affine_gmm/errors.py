"""Exception hierarchy shared by the library and mapped to CLI exit codes."""

from __future__ import annotations


class AffineGmmError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InvalidArgument(AffineGmmError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 2


class ConfigError(AffineGmmError):
    """A run configuration or parameter file is malformed."""

    exit_code = 2


class DataError(AffineGmmError):
    """A data file is missing, unreadable or inconsistent with the config."""

    exit_code = 3


class NumericalFailure(AffineGmmError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""

    exit_code = 4


class GiveUp(NumericalFailure):
    """A randomized search exhausted its attempt budget."""
