"""Exception hierarchy.

Every error raised by the package derives from :class:`EEGError`. The CLI
maps :class:`DataError` subclasses to exit code 2 and :class:`ConfigError`
to exit code 1.
"""


class EEGError(Exception):
    """Base class for all package errors."""


class ConfigError(EEGError, ValueError):
    """Invalid configuration or parameter combination."""


class DataError(EEGError, ValueError):
    """Input data violates a precondition."""


# eeg-core
class NonIntegerFactor(DataError):
    pass


class InvalidCutoff(ConfigError):
    pass


class WindowTooLong(DataError):
    pass


class WindowOutOfRange(DataError):
    pass


# features
class DegenerateSignal(DataError):
    """Sample variance at or below the variance floor."""

    def __init__(self, message, *, segment=None, channel=None, band=None):
        super().__init__(message)
        self.segment = segment
        self.channel = channel
        self.band = band


class NoPeak(DataError):
    def __init__(self, message, *, channel=None):
        super().__init__(message)
        self.channel = channel


# geometry
class OffSphere(DataError):
    pass


class KTooLarge(ConfigError):
    pass


class UnknownLabel(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ParseError(DataError):
    pass


class DuplicateLabel(DataError):
    pass


# nn
class DimensionMismatch(DataError):
    pass


class EmptySequence(DataError):
    pass


class EmptyDataset(DataError):
    pass


class InsufficientData(DataError):
    pass


# synth
class InvalidConfig(ConfigError):
    pass
