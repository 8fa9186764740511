"""Exception types shared across the package."""


class InvalidGeometryError(ValueError):
    """Lane/link geometry is inconsistent (non-positive length, offset past the approach, ...)."""


class IllegalMovementError(ValueError):
    """A (entrance, movement) pair that the intersection does not allow."""


class InvalidCodeError(ValueError):
    """Malformed three-digit demand scenario code."""


class InvalidConfigError(ValueError):
    """Inconsistent simulation or sweep configuration."""


class InvalidStepError(ValueError):
    """Controller or engine stepped with a non-positive dt."""


class MeasurementError(ValueError):
    """A delay sample with exit before entry, or similar impossible measurement."""


class ComparisonError(ValueError):
    """Result sets passed to compare() do not cover the same (code, seed) grid."""
