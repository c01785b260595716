"""Exception hierarchy.

Every error raised by the library derives from :class:`DDPulseError`, and
the input-validation ones also derive from :class:`ValueError` so callers
that only know about builtins still catch them.
"""


class DDPulseError(Exception):
    """Base class for all library errors."""


class InvalidInputError(DDPulseError, ValueError):
    """Malformed numerical input (non-Hermitian generator, shape mismatch...)."""


class InvalidCountError(InvalidInputError):
    """Pulse count incompatible with a protocol's block length."""


class PulseOverlapError(InvalidInputError):
    """Pulse durations too long for the requested spacing."""


class ModelMismatchError(DDPulseError, ValueError):
    """Engine and schedule disagree on the pulse model (delta vs finite)."""


class InvalidParameterError(DDPulseError, ValueError):
    """Model parameter outside its domain (e.g. a non-positive rate)."""


class ConfigError(DDPulseError, ValueError):
    """Bad run configuration or command-line input."""


class DataFormatError(DDPulseError, ValueError):
    """Unreadable data file; ``line`` is the 1-based offending line."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
