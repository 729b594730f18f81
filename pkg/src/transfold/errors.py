"""Exception hierarchy shared by all modules."""


class TransfoldError(Exception):
    """Base class for every error raised by the package."""


class NotFound(TransfoldError, KeyError):
    """Unknown catalog name."""


class DomainError(TransfoldError, ValueError):
    """A time value outside the open interval ``t_range``."""


class NonSquareSystem(TransfoldError, ValueError):
    """The residual has a different length than the unknown vector."""


class EvaluationError(TransfoldError, ArithmeticError):
    """Non-finite output of a problem callback.

    Attributes:
        x: the state at which evaluation failed.
        t: the time at which evaluation failed.
    """

    def __init__(self, message, x=None, t=None):
        super().__init__(message)
        self.x = x
        self.t = t


class ExpressionError(TransfoldError, ValueError):
    """An arithmetic expression string could not be parsed."""


class BadLoadExpression(ExpressionError):
    pass


class SvdFailure(TransfoldError, ArithmeticError):
    pass


class NotOnZeroSet(TransfoldError, ValueError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NotOnZeroSetOfG(NotOnZeroSet):
    pass


class AmbiguousKernel(TransfoldError, ArithmeticError):
    pass


class HessianAsymmetry(TransfoldError, ValueError):
    pass


class NewtonFailure(TransfoldError, ArithmeticError):
    """Base class of Newton solver failures.

    Attributes:
        x: last iterate.
        residual: residual norm at the last iterate.
    """

    def __init__(self, message, x=None, residual=None):
        super().__init__(message)
        self.x = x
        self.residual = residual


class MaxIterExceeded(NewtonFailure):
    pass


class SingularJacobian(NewtonFailure):
    pass


class Diverged(NewtonFailure):
    pass


class SingularBorderedSystem(NewtonFailure):
    pass


class StartNotOnCurve(TransfoldError, ValueError):
    pass


class RankDeficientStart(TransfoldError, ArithmeticError):
    pass


class InsufficientData(TransfoldError, ValueError):
    pass


class DimensionMismatch(TransfoldError, ValueError):
    pass


class DegeneratePairing(TransfoldError, ValueError):
    pass


class ZeroInput(TransfoldError, ValueError):
    pass


class StepUnderflow(TransfoldError, ArithmeticError):
    pass


class NewtonFailureInStep(TransfoldError, ArithmeticError):
    pass


class NoConvergence(TransfoldError, ArithmeticError):
    """The frozen-time gradient flow did not settle before ``s_max``."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class NonTransversalFoldEncountered(TransfoldError, ArithmeticError):
    def __init__(self, message, fold=None):
        super().__init__(message)
        self.fold = fold


class NoAttractorFound(TransfoldError, ArithmeticError):
    pass


class SchemaViolation(TransfoldError, ValueError):
    """Serialized data does not match the documented shape.

    Attributes:
        path: dotted path of the offending field.
    """

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ConfigError(TransfoldError, ValueError):
    """Invalid run configuration (unknown key, bad value)."""
