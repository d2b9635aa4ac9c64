"""Exception types shared across the library."""


class InvalidCovarianceError(ValueError):
    """Covariance matrix is not square/symmetric, or has a genuinely negative spectrum."""


class SingularSystemError(RuntimeError):
    """A linear system that the caller required to be invertible is numerically singular."""


class UndefinedConstantError(RuntimeError):
    """A Monte Carlo ratio constant has a vanishing denominator and is undefined."""


class CoverageError(ValueError):
    """Patch assembly found a pixel not covered by any patch."""


class ContainerFormatError(ValueError):
    """A binary container (mixture or sensed image) is malformed or truncated."""


class PgmError(ValueError):
    """Base class for PGM file problems."""


class PgmMagicError(PgmError):
    """File does not start with a PNM magic number."""


class PgmUnsupportedError(PgmError):
    """Recognized PNM variant that this reader does not handle (e.g. ASCII P2)."""


class PgmHeaderError(PgmError):
    """Header fields are malformed (non-numeric dims, maxval != 255, ...)."""


class PgmTruncatedError(PgmError):
    """Pixel payload is shorter than width*height bytes."""
