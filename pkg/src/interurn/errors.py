"""Exception types shared across the package."""


class UrnError(Exception):
    """Base class for all interurn errors."""


class DimensionMismatch(UrnError):
    """Shapes of W, H, or initial compositions are inconsistent."""


class NegativeEntry(UrnError):
    """A quantity that must be nonnegative (or strictly positive) is not."""


class ColumnSumNotConstant(UrnError):
    """Columns of a mean replacement matrix do not share a common sum."""


class RowNotStochastic(UrnError):
    """A row of the interaction matrix is not a convex combination."""


class InternalInvariantViolation(UrnError):
    """A condition that should hold for every valid input failed; signals a bug."""


class DefectiveMatrix(UrnError):
    """Eigenvector matrix is numerically rank deficient; Jordan blocks are not supported."""


class NonSimplePerron(UrnError):
    """The eigenvalue 1 of a leading subsystem matrix is not simple."""


class SingularSolve(UrnError):
    """(I - Q) is numerically singular when solving for a follower limit."""


class RegimeMismatch(UrnError):
    """An operation was invoked for a rate regime it does not apply to."""


class IllConditionedReduction(UrnError):
    """The change of basis removing annihilated components is ill conditioned."""


class NumericUnderflow(UrnError):
    """An urn total became nonpositive during simulation."""


class InvalidCheckpoint(UrnError):
    """Checkpoint steps are not strictly increasing integers within the horizon."""


class UnbalancedModel(UrnError):
    """A check requiring constant total replacements was invoked on an unbalanced model."""


class InsufficientCheckpoints(UrnError):
    """Not enough checkpoints to fit a convergence rate."""


class MissingInput(UrnError):
    """A pipeline stage output required by a later stage is absent."""
