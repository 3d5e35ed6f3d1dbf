""" Exception and warning classes raised by micarraytools.
"""
from astropy.utils.exceptions import AstropyUserWarning

__all__ = ['MicArrayError', 'AudioFileError', 'ConfigurationError',
           'DimensionError', 'EvaluationError', 'MicArrayWarning']


class MicArrayError(Exception):
    """Base class for errors raised by micarraytools."""


class AudioFileError(MicArrayError):
    """A WAV file is unreadable, has an unsupported encoding or no channels."""


class ConfigurationError(MicArrayError):
    """A run configuration is invalid (unknown key, bad value, missing geometry)."""


class DimensionError(MicArrayError):
    """Array shapes passed to a processing stage do not agree."""


class EvaluationError(MicArrayError):
    """A metric cannot be computed on the given signals."""


class MicArrayWarning(AstropyUserWarning):
    """Recoverable anomaly in the processing chain."""
