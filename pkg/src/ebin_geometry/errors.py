"""Exception types raised by the library."""


class GeometryError(Exception):
    """Base class for all library errors."""


class InvalidInput(GeometryError, ValueError):
    """Input fails a precondition (non-finite, not definite, grid mismatch...)."""


class OutOfDomain(GeometryError, ValueError):
    """Time parameter lies outside the maximal domain of a geodesic.

    ``cell`` holds the multi-index of the offending cell for field-level calls.
    """

    def __init__(self, message, cell=None, domain_sup=None):
        super().__init__(message)
        self.cell = cell
        self.domain_sup = domain_sup


class OutOfRange(GeometryError, ValueError):
    """Target point lies outside the image of the exponential map."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class NumericalFailure(GeometryError, ArithmeticError):
    """An eigen-decomposition or similar kernel did not produce a usable result."""


class NotCauchySequence(GeometryError, ValueError):
    """A sequence failed the Cauchy certificate; ``evidence`` carries the traces."""

    def __init__(self, message, evidence=None):
        super().__init__(message)
        self.evidence = evidence or {}
