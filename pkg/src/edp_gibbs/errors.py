"""Exception taxonomy shared by the whole package.

Two broad categories matter for the CLI exit codes: violated preconditions
(the caller asked for something the model cannot express) and numeric
failures (the computation itself degenerated).
"""


class EdpError(Exception):
    """Base class for all package errors."""


class PreconditionError(EdpError):
    """The request violates a documented precondition."""


class NumericError(EdpError):
    """A computation degenerated (overflow, non-concavity, starvation...)."""


class BoundaryError(PreconditionError):
    """Evaluation point at or below the left support boundary."""


class SubMeanTargetError(PreconditionError):
    """Target mean at or below the untilted mean: no positive tilt exists."""


class UnreachableTargetError(PreconditionError):
    """Root bracketing exhausted its cap without enclosing the target."""


class IncompatibleConditionError(PreconditionError):
    """Conditioning point is incompatible with the remaining coordinates."""


class AcceptanceStarvationError(PreconditionError):
    """Rejection/importance sampler produced too few usable draws."""


class EvaluationOverflowError(NumericError):
    """A log-domain quantity left the representable range."""


class NonConcaveWindowError(NumericError):
    """The tilted exponent is not concave at its stationary point."""


class WrapAroundError(NumericError):
    """Convolution grid would alias (output longer than the allowed cap)."""


class DegenerateEstimateError(NumericError):
    """Monte Carlo estimate has no support (all weights zero)."""
