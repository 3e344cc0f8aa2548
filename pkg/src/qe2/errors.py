"""Exception types shared across the package."""


class QE2Error(Exception):
    """Base class for all library errors."""


class SingularPoint(QE2Error):
    """Evaluation requested exactly at a pole of the product form."""


class DenominatorPole(QE2Error):
    """A series denominator factor vanishes among the summed terms."""


class NonConvergent(QE2Error):
    """Truncation budget exhausted without meeting the convergence test."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegreeOverflow(QE2Error):
    """Normal-ordered polynomial arithmetic exceeded its degree bound."""


class TruncationError(QE2Error):
    """Truncated-basis computation leaked too much mass across the cutoff."""


class GridFileError(QE2Error):
    """Malformed grid file."""

    def __init__(self, message, lineno=None):
        super().__init__(message)
        self.lineno = lineno
