"""Error taxonomy shared by every stage of the toolkit.

Two families matter to callers: bad input (``InvalidArgumentError`` and
subclasses, CLI exit code 1) and numerical breakdown
(``NumericalFailureError`` and subclasses, CLI exit code 2).
"""


class TsaKitError(Exception):
    """Base class for everything raised deliberately by this package."""


class InvalidArgumentError(TsaKitError, ValueError):
    """A caller-supplied value violates a documented precondition."""


class FormatError(InvalidArgumentError):
    """A case, knowledge-base, or model document failed to parse."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateLabelsError(InvalidArgumentError):
    """Training data contains fewer than two distinct classes."""


class SimplexViolationError(InvalidArgumentError):
    """Kernel mixture weights are not a probability vector."""


class DegenerateKnowledgeBaseError(InvalidArgumentError):
    """A generation plan discarded too many scenarios to be trusted."""


class NumericalFailureError(TsaKitError):
    """A numerical routine could not produce a finite, converged answer."""


class ReductionSingularError(NumericalFailureError):
    """The eliminated block of a network reduction is singular."""


class EquilibriumFailureError(NumericalFailureError):
    """Newton iteration on the power balance did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IntegrationDivergedError(NumericalFailureError):
    """The integrator produced a non-finite state."""

    def __init__(self, message, last_finite_index=None):
        super().__init__(message)
        self.last_finite_index = last_finite_index
