"""Exception hierarchy.

Every error raised by the package derives from :class:`GaitError`, which is
itself a ``ValueError`` so callers that only care about bad input can catch
the builtin.
"""


class GaitError(ValueError):
    """Base class for all package errors."""


# -- trial recordings -------------------------------------------------------

class MissingJoint(GaitError):
    pass


class NonMonotoneTime(GaitError):
    pass


class MalformedRow(GaitError):
    pass


class TooShort(GaitError):
    pass


class GapTooLong(GaitError):
    pass


class GapAtBoundary(GaitError):
    pass


class InvalidParams(GaitError):
    pass


class ManifestError(GaitError):
    pass


# -- segmentation -------------------------------------------------------------

class NoCycleFound(GaitError):
    pass


class AmbiguousCycle(GaitError):
    pass


class TooFewFrames(GaitError):
    pass


# -- kinematics -------------------------------------------------------------

class DegenerateSegment(GaitError):
    pass


class NoDoubleSupport(GaitError):
    pass


# -- dtw --------------------------------------------------------------------

class EmptySequence(GaitError):
    pass


class TooLong(GaitError):
    pass


class EmptyCohort(GaitError):
    pass


class MissingLeg(GaitError):
    pass


class CohortTooSmall(GaitError):
    pass


# -- statistics -------------------------------------------------------------

class TooFew(GaitError):
    pass


class DegenerateVariance(GaitError):
    pass


class IncompleteMatrix(GaitError):
    pass


class ZeroVariance(GaitError):
    pass


class ZeroVarianceDifferences(GaitError):
    pass


class LengthMismatch(GaitError):
    pass


class NonConvergence(GaitError, ArithmeticError):
    """Iterative numeric kernel hit its iteration cap."""


class EmptyGroup(GaitError):
    pass
