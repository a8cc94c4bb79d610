"""Exception hierarchy for model construction, inference and elicitation."""

from __future__ import annotations


class RexmodError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(RexmodError):
    """Invalid network structure or variable definition."""


class CycleDetected(ModelError):
    """The parent relation contains a directed cycle."""


class TyingShapeMismatch(ModelError):
    """Members of a tying class do not share a common table shape."""


class UnknownVariable(ModelError):
    """A referenced variable name is not part of the network."""


class UnknownLevel(ModelError):
    """A referenced level label is not a level of its variable."""


class InvalidLocalModel(ModelError):
    """A local model violates its structural requirements."""


class DimensionMismatch(RexmodError):
    """A vector or matrix has the wrong shape for its parameter block."""


class NonFinite(RexmodError):
    """A computation produced or received a non-finite value."""


class ZeroProbability(RexmodError):
    """A probability that must be strictly positive is zero."""


class ZeroEvidenceProbability(RexmodError):
    """An observation has probability zero under the current parameters.

    `row` is the 0-based index of the offending observation when the error
    arises from a sample-level computation, else None.
    """

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class MissingPriorBlock(RexmodError):
    """A prior or elicitation does not cover a required parameter block."""


class SingularHessian(RexmodError):
    """The Newton step is undefined because the Hessian is singular."""


class NonConvergence(RexmodError):
    """Iterative fitting failed to reach the requested tolerance."""

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class SupportViolation(RexmodError):
    """A target distribution puts mass where the model forces zero."""


class SingularCovariance(RexmodError):
    """The statistic covariance is not invertible."""


class NonPositiveInterval(RexmodError):
    """An elicited interval of variation has non-positive width."""


class InvalidBestGuess(RexmodError):
    """An elicited best-guess distribution is unusable."""


class CapExceeded(RexmodError):
    """The model is too large for the enumeration oracle."""


class FileFormatError(RexmodError):
    """An input file does not conform to its documented format."""
