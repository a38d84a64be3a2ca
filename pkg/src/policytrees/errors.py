"""Exception types shared across the package.

The CLI maps these onto exit codes: InputError (and subclasses) -> 2,
ConfigError -> 3, InternalError -> 4.
"""


class PolicyTreesError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PolicyTreesError):
    """Bad data: shape mismatches, non-finite values, schema violations."""


class ParseError(InputError):
    """Malformed document or table; message carries the offending location."""


class ConfigError(PolicyTreesError):
    """Invalid settings: bad hyperparameters, unknown identifiers, empty grids."""


class InternalError(PolicyTreesError):
    """Invariant violation inside the library; indicates a bug, not bad input."""
