"""Exception types shared across the package."""


class ParajacobiError(Exception):
    """Base class for all library errors."""


class ConfigError(ParajacobiError):
    """Invalid family parameters or malformed configuration input."""


class ExtractionError(ParajacobiError):
    """A tail limit did not stabilise at the requested resolution."""

    def __init__(self, message, spread=None):
        super().__init__(message)
        self.spread = spread


class UnsupportedCaseError(ParajacobiError):
    """Operation requires the non-diagonalizable |trace| = 2 case."""


class AmbiguousCaseError(ParajacobiError):
    """Classification sits numerically on the IIa/IIb boundary."""

    def __init__(self, message, trace_distance, identity_distance):
        super().__init__(message)
        self.trace_distance = trace_distance
        self.identity_distance = identity_distance


class SingularPointError(ParajacobiError):
    """Evaluation at (or numerically on top of) the root of tau."""


class OutsideOscillatoryRegionError(ParajacobiError):
    """A step assumed complex eigenvalues but the discriminant was >= 0."""


class StartIndexTooSmallError(ParajacobiError):
    """The uniform-diagonalization start index j0 was chosen too small."""


class InternalConsistencyError(ParajacobiError):
    """Two independent evaluations of the same quantity disagree."""


class OutOfScopeError(ParajacobiError):
    """The input violates a standing assumption (e.g. tau identically 0)."""
