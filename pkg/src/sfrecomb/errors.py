"""Exception hierarchy.

Every error carries the process exit code the CLI reports for it:
1 for usage/config problems, 2 for data/format problems, 3 for numerical
failures.
"""


class SceneFlowError(Exception):
    exit_code = 2


class ConfigError(SceneFlowError):
    """Missing or malformed configuration, missing input files."""

    exit_code = 1


class DataError(SceneFlowError):
    exit_code = 2


class DecodeError(DataError):
    """A raster file could not be decoded at all."""


class FormatError(DataError):
    """A raster decoded but has the wrong bit depth or channel count."""


class RangeError(DataError):
    """A value cannot be represented in the target encoding."""


class ShapeError(DataError):
    """Inputs that must share dimensions do not."""


class DensityError(DataError):
    """A dense estimate was required but the input has gaps."""


class NoDataError(DataError):
    pass


class SpecError(DataError):
    """A synthetic scene description violates its invariants."""


class NumericalError(SceneFlowError):
    exit_code = 3


class DomainError(NumericalError):
    """Argument outside the mathematical domain (e.g. nonpositive disparity)."""


class NoSeedsError(NumericalError):
    """Interpolation has nothing to interpolate from."""
