"""Exception types shared across the package."""


class BeaconError(Exception):
    """Base class for all library errors."""


class FormatError(BeaconError):
    """Malformed or unsupported on-disk data."""


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class TrailingData(FormatError):
    pass


class UnsupportedDtype(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class UnsupportedBits(BeaconError):
    pass


class CodeOutOfRange(BeaconError):
    pass


class NonFiniteData(BeaconError):
    pass


class DimensionMismatch(BeaconError):
    pass


class EmptyInput(BeaconError):
    pass


class ShortCalibration(BeaconError):
    """Calibration matrix has fewer rows than columns."""


class ZeroVector(BeaconError):
    """A cosine was requested against a zero-norm vector."""


class ZeroQuantizedOutput(BeaconError):
    """No scale can be fitted against an all-zero quantized output."""


class NonPositiveScale(BeaconError):
    pass


class TooLarge(BeaconError):
    """An exhaustive enumeration would exceed the candidate limit."""


class InvariantViolation(BeaconError):
    """A numerical self-check failed."""


class RankDeficientWarning(UserWarning):
    """Calibration data is numerically rank deficient."""
