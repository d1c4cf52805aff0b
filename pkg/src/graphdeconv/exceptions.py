"""Exception hierarchy shared by all modules."""


class GraphDeconvError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(GraphDeconvError, ValueError):
    """Invalid parameter value (out of range, wrong shape, ...)."""


class IngestionError(GraphDeconvError, ValueError):
    """Malformed input file. The message names the offending line."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateDegreeError(GraphDeconvError, ValueError):
    """A node has zero degree where a degree normalization is required."""


class ContractError(GraphDeconvError, ValueError):
    """A documented precondition on an argument does not hold."""


class SingularFilterError(GraphDeconvError, ArithmeticError):
    """A frequency response vanishes at some graph frequency."""


class NonInvertibleFilterError(SingularFilterError):
    """Random filter generation could not produce an invertible filter."""


class ConditioningWarning(UserWarning):
    """A least-squares fit was rank deficient or ill conditioned."""
