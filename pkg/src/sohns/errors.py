"""Exception types shared across the library.

Every error that a solver or the CLI can raise deliberately lives here, so the
exit-code mapping in the CLI stays a single dictionary.
"""

__all__ = [
    "SohnsError",
    "ConfigError",
    "ParseError",
    "UnknownKey",
    "RangeError",
    "NumericError",
    "SolveFailed",
    "EigensolveFailed",
    "FitFailed",
    "NonIntegrableKernel",
    "DegenerateDenominator",
    "InvariantViolation",
    "PoleSingular",
    "PoleGaugeExceeded",
    "CflViolation",
    "DegenerateCurrent",
    "NegativeMass",
    "DegreeMismatch",
    "TimeMismatch",
    "SchemaMismatch",
]


class SohnsError(Exception):
    """Base class for all deliberate errors."""


class ConfigError(SohnsError):
    """Configuration is malformed or inconsistent (CLI exit code 2)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKey(ConfigError):
    pass


class RangeError(ConfigError):
    pass


class NumericError(SohnsError):
    """A numerical procedure failed to produce a certified result (exit code 3)."""


class SolveFailed(NumericError):
    pass


class EigensolveFailed(NumericError):
    pass


class FitFailed(NumericError):
    pass


class NonIntegrableKernel(NumericError):
    pass


class DegenerateDenominator(NumericError):
    pass


class InvariantViolation(SohnsError):
    """A structural invariant was violated during a run (exit code 4)."""


class PoleSingular(InvariantViolation):
    """Stereographic chart evaluated too close to the projection pole."""


class PoleGaugeExceeded(InvariantViolation):
    """max(phi^2 + psi^2) exceeded the single-chart gauge bound."""


class CflViolation(InvariantViolation):
    pass


class DegenerateCurrent(InvariantViolation):
    """|j_f| below floor: the mean orientation Omega_f is undefined."""


class NegativeMass(InvariantViolation):
    pass


class DegreeMismatch(InvariantViolation):
    pass


class TimeMismatch(InvariantViolation):
    pass


class SchemaMismatch(InvariantViolation):
    pass
