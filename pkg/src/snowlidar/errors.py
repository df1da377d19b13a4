"""Exception hierarchy shared across the package."""


class SnowlidarError(Exception):
    """Base class for all package-specific failures."""


class SweepFormatError(SnowlidarError):
    """Sweep file has a malformed length or an unreadable header."""


class SweepRecordError(SweepFormatError):
    """One or more records inside a sweep file are invalid."""


class CalibrationFormatError(SnowlidarError):
    """Calibration file is missing, unversioned, or violates an invariant."""


class EstimationError(SnowlidarError):
    """A data-driven fit (plane, power model, noise floor) could not be made."""


class SamplingError(SnowlidarError):
    """Particle placement failed; indicates a misconfigured density."""


class ConfigurationError(SnowlidarError):
    """Pipeline inputs are inconsistent (e.g. layer without calibration)."""


class TotalInternalReflection(SnowlidarError):
    """Refraction is impossible at the requested angle (n_in > n_out only)."""
