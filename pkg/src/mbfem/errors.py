"""Exception hierarchy shared across the package."""


class MbfemError(Exception):
    """Base class for all package errors."""


class SingularMatrix(MbfemError):
    """Direct factorization hit a zero pivot beyond tolerance."""


class NoConvergence(MbfemError):
    """An iterative procedure exhausted its iteration budget."""


class DimensionMismatch(MbfemError):
    pass


class NonManifold(MbfemError):
    """A facet is shared by more than two cells."""


class InconsistentOrientation(MbfemError):
    pass


class DegenerateCell(MbfemError):
    pass


class DegenerateFacet(MbfemError):
    pass


class CellInversion(MbfemError):
    """A cell measure collapsed below the degeneracy threshold ("mesh breaking")."""


class UnsupportedGeometry(MbfemError):
    pass


class ZeroNormal(MbfemError):
    """Incident element normals cancel at a vertex."""


class InfeasibleMass(MbfemError):
    """Requested mass is outside the range reachable under the bounds."""


class SecantStall(MbfemError):
    """Secant iteration hit a flat segment and bisection fallback also failed."""


class DomainError(MbfemError):
    """Field value left the domain of a potential (e.g. |u| >= 1 for the log potential)."""


class FixedPointNoConvergence(MbfemError):
    """Implicit staggering did not converge within the iteration budget."""


class AreaDriftExceeded(MbfemError):
    """Cumulative surface-area change crossed the configured threshold."""

    def __init__(self, message, time=None, drift=None):
        super().__init__(message)
        self.time = time
        self.drift = drift


class ParseError(MbfemError):
    """Config text could not be parsed."""


class SchemaError(MbfemError):
    """Config parsed but violates the scenario schema.

    ``violations`` lists every individual problem found.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations) if violations else [str(message)]


class InsufficientLevels(MbfemError):
    pass


class IoError(MbfemError):
    pass
