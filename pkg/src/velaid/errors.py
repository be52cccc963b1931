"""Exception types raised across the package."""


class VelaidError(Exception):
    """Base class for all package errors."""


class NearZeroNormError(VelaidError, ValueError):
    """A vector was too short to be projected onto the unit sphere."""


class CollinearError(VelaidError, ValueError):
    """Two directions that must span a plane are (nearly) collinear."""


class DegenerateMatrixError(VelaidError, ValueError):
    """A matrix cannot be projected onto SO(3) or is not a rotation."""


class NotHurwitzError(VelaidError, ValueError):
    """Filter gains whose characteristic polynomial is not Hurwitz."""


class GainConditionError(VelaidError, ValueError):
    """Observer gains violate the stability condition of the observer."""


class RunRecordFormatError(VelaidError, ValueError):
    """A run-record file is malformed."""


class ConfigError(VelaidError, ValueError):
    """A scenario configuration could not be parsed or validated."""
