"""Exception types shared across the package."""


class VdnaError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(VdnaError):
    """A file does not conform to one of the binary container formats."""


class IncompatibleError(VdnaError):
    """Two artifacts cannot be combined or compared.

    Raised when kind, extractor, layer table, bin count or calibration
    fingerprint differ between two containers that must match.
    """


class CalibrationError(VdnaError):
    """A neuron is uncalibrated or the calibration cannot be applied."""
