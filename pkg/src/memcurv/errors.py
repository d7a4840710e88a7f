"""Exception types shared across the toolkit."""


class MemcurvError(Exception):
    """Base class for all toolkit errors."""


class NotInHull(MemcurvError):
    """Query point lies outside the convex hull of the node set."""


class SingularHessian(MemcurvError):
    """Dual Hessian is numerically singular (e.g. collinear nodes)."""


class MaxIterExceeded(MemcurvError):
    """Newton iteration did not reach the residual tolerance."""


class DegenerateMetric(MemcurvError):
    """First fundamental form is not positive definite."""


class ParseError(MemcurvError):
    """Mesh, point-set or trajectory file could not be parsed."""


class NonManifoldEdge(MemcurvError):
    """An edge is shared by more than two faces."""


class OrientationError(MemcurvError):
    """Face orientations cannot be made globally consistent."""


class ZeroNormal(MemcurvError):
    """Area-weighted vertex normal vanishes."""


class DegenerateFrame(MemcurvError):
    """No incident edge admits a tangent-plane projection."""


class InsufficientNodes(MemcurvError):
    """Requested more neighbors than the node set provides."""


class EmptyWindow(MemcurvError):
    """No trajectory frames fall inside the averaging window."""


class MismatchedNodes(MemcurvError):
    """Reference values are not defined on the evaluated node set."""


class ModeMismatch(MemcurvError):
    """Energy mode is incompatible with the mesh topology."""
