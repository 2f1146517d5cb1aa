"""Exception types shared across the package."""


class LidarPolyError(Exception):
    """Base class for all package errors."""


class GeometryError(LidarPolyError):
    pass


class DegenerateInput(GeometryError):
    """Point set or polytope has zero volume in the working dimension."""


class Unbounded(GeometryError):
    pass


class EmptySet(GeometryError):
    pass


class EmptyIntersection(GeometryError):
    pass


class Infeasible(GeometryError):
    pass


class DegeneratePolytope(GeometryError):
    pass


class EmptyCloud(LidarPolyError):
    pass


class SeedInObstacle(LidarPolyError):
    pass


class SeedOutsideBounds(LidarPolyError):
    pass


class NoOverlap(LidarPolyError):
    pass


class Unreachable(LidarPolyError):
    pass


class PoseInObstacle(LidarPolyError):
    pass


class SafetyViolation(LidarPolyError):
    pass


class InitialClearanceViolation(LidarPolyError):
    pass


class DataError(LidarPolyError):
    """Malformed input file; message carries the offending line where known."""
