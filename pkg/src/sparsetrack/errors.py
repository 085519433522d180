"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, data/format errors -> 2,
anything else -> 3.
"""


class TrackError(Exception):
    """Base class for all package errors."""


class ConfigError(TrackError):
    """Invalid or missing configuration (bad key, bad value, bad flag)."""


class FormatError(TrackError):
    """Malformed input data (files, buffers, run-length streams)."""


class DataError(TrackError):
    """Structurally valid input that cannot be used (missing GT, count mismatch)."""


class ContractError(TrackError):
    """Caller violated an operation precondition (dimension mismatch)."""


class NumericError(TrackError):
    """Non-finite values where finite ones are required."""


class GeometryError(TrackError):
    """Degenerate or non-convex geometry where a valid polygon is required."""


class DegenerateRegionError(GeometryError):
    """Region with (near-)zero area."""


class InsufficientMaskError(TrackError):
    """Mask has too few or too degenerate support pixels for a moment fit."""


class DictionaryBuildError(TrackError):
    """Appearance dictionary could not be constructed from the given region."""


class DecompositionError(TrackError):
    """Affine matrix cannot be factored into the motion parameterization."""
