"""Exception hierarchy shared across the package."""


class McPoseError(Exception):
    """Base class for all domain errors raised by this package."""


class InvariantViolationError(McPoseError):
    """A domain value was constructed with data violating its invariants."""


class DegenerateDepthError(McPoseError):
    """Point lies on (or numerically at) a camera's principal plane."""


class MissingJointError(McPoseError):
    """A joint required by the operation is absent from the skeleton."""


class DegenerateGeometryError(McPoseError):
    """Joint configuration leaves a segment frame undefined (collinear limb)."""


class InsufficientCamerasError(McPoseError):
    """Fewer than two cameras are available to triangulate a point."""


class InsufficientViewsError(InsufficientCamerasError):
    """Fewer than two camera views were supplied to a skeleton solve."""


class RankDeficientError(McPoseError):
    """The weighted normal matrix is rank deficient or too ill conditioned."""


class AllWeightsZeroError(McPoseError):
    """Every camera weight is zero; the weighted system carries no information."""


class NoMatchesError(McPoseError):
    """No estimate/ground-truth frame pairs matched within the time tolerance."""


class EmptyInputError(McPoseError):
    """An aggregation was invoked with no input records."""
