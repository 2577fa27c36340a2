"""Exception types raised across the toolkit.

Every domain failure derives from RigposeError so callers (and the CLI)
can separate expected geometric/numeric failures from programming bugs.
"""


class RigposeError(Exception):
    """Base class for all domain errors."""


class SingularRotation(RigposeError):
    """Rotation has a 180-degree component and no Cayley representation."""


class GimbalLock(RigposeError):
    """Euler decomposition undefined: middle angle at +/-90 degrees."""


class EmptyInput(RigposeError):
    """An aggregate operation received an empty collection."""


class BehindCamera(RigposeError):
    """Point has non-positive depth in the camera frame."""


class NoConvergence(RigposeError):
    """Iterative inversion failed to reach its tolerance."""


class TooFewPoints(RigposeError):
    """Fewer correspondences than the minimum the method requires."""


class DegenerateConfiguration(RigposeError):
    """Point configuration too ill-conditioned to solve (coplanar/collinear)."""


class DegenerateGeometry(DegenerateConfiguration):
    """World points are collinear; pose is not uniquely determined."""


class RankDeficientB(RigposeError):
    """All ray directions parallel; translation unobservable along the ray."""


class SolverFailure(RigposeError):
    """Polynomial solve backend broke down (template or eigen failure)."""


class NoRealRoots(RigposeError):
    """Polynomial system produced no usable real stationary points."""


class NumericalFailure(RigposeError):
    """Optimization produced non-finite values and could not recover."""


class MissingReference(RigposeError):
    """A rotation session lacks the reference camera's pose."""


class CameraNeverObserved(RigposeError):
    """A camera appears in no session; its extrinsic cannot be estimated."""


class NothingVisible(RigposeError):
    """No generated point is visible in any camera."""


class LengthMismatch(RigposeError):
    """Paired sequences (estimates vs references) differ in length."""
