"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes (see ``rafm.cli``).
"""


class RAFMError(Exception):
    """Base class for all package errors."""


class DimensionError(RAFMError, ValueError):
    """Operand shapes do not agree."""


class DomainError(RAFMError, ValueError):
    """Argument outside the operation's domain (empty input, t outside [0, 1], ...)."""


class NumericError(RAFMError, ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class DegenerateInputError(DomainError):
    """Input cannot be normalized (e.g. an all-zero image fed to the encoder)."""


class RetrievalError(RAFMError, LookupError):
    """Top-1 retrieval requested from an empty memory bank."""


class DataError(RAFMError):
    """Dataset content is missing, inconsistent, or fails a leakage check."""


class ConfigError(RAFMError, ValueError):
    """Experiment configuration violates an invariant."""


class GenerationError(DataError):
    """Procedural data generation could not satisfy its invariants."""
