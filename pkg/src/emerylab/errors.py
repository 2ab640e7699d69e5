"""Exception hierarchy.

Validation errors signal rejected inputs (CLI exit 1), solver failures
signal well-posed problems the solvers could not certify (CLI exit 2),
and market I/O errors signal unreadable input files (CLI exit 3).
"""


class EmeryLabError(Exception):
    pass


class ValidationError(EmeryLabError):
    """Input rejected by a precondition or schema check."""


class SolverFailure(EmeryLabError):
    """A solver could not produce a certified answer."""


class MarketIOError(EmeryLabError):
    """Market/measure/claim file could not be read."""


# -- tree construction and probability plumbing


class NonPositiveProbability(ValidationError):
    pass


class ProbabilitySumViolation(ValidationError):
    pass


class RaggedDepth(ValidationError):
    pass


class UnknownNode(ValidationError):
    pass


class LevelOutOfRange(ValidationError):
    pass


# -- processes and calculus


class PredictabilityViolation(ValidationError):
    pass


class NotSupermartingale(ValidationError):
    pass


class InitialValueTooLarge(ValidationError):
    pass


# -- metrics


class GridStepInvalid(ValidationError):
    pass


class WindowTooShort(ValidationError):
    pass


# -- wealth sets


class NonPositiveSwitchTarget(ValidationError):
    pass


class AlphaOutOfRange(ValidationError):
    pass


class ZeroGeneratorValue(ValidationError):
    pass


# -- duality solvers


class Na1Fails(SolverFailure):
    pass


class DegenerateNode(SolverFailure):
    pass


class DualInfeasible(SolverFailure):
    pass


class GapTooLarge(SolverFailure):
    pass


class SchemaError(ValidationError):
    """Market document violates the input schema."""
