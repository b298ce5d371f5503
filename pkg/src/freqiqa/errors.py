"""Exception hierarchy shared by all freqiqa modules."""


class FreqIQAError(Exception):
    """Base class for every error raised by freqiqa."""


class DataError(FreqIQAError):
    """Bad or unreadable input data (images, manifests, feature files)."""


class ImageReadError(DataError, OSError):
    pass


class DimensionError(DataError, ValueError):
    pass


class FormatError(DataError, ValueError):
    """A file does not follow its documented format."""


class VersionError(FormatError):
    """A versioned file was written under an incompatible format tag."""


class SplitError(DataError, ValueError):
    pass


class NumericalError(FreqIQAError, ArithmeticError):
    pass


class FactorizationError(NumericalError):
    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class UndefinedCorrelationError(NumericalError, ValueError):
    """Correlation requested for an input with no variation."""
