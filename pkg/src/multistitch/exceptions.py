"""Shared exception hierarchy for the stitching pipeline."""


class StitchError(Exception):
    """Base class for all pipeline errors."""


class DecodeError(StitchError):
    """An image file could not be read or has an unsupported format."""


class ImageWriteError(StitchError):
    """An image file could not be written."""


class CorrespondenceParseError(StitchError):
    """A correspondence file line could not be parsed."""

    def __init__(self, line_number, message):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ValidationError(StitchError):
    """Input data violates a documented invariant."""


class InsufficientMatchesError(StitchError):
    """The built-in matcher found too few matches to proceed."""


class InsufficientDataError(StitchError):
    """Not enough point pairs for a model fit."""


class DegeneracyError(StitchError):
    """All minimal samples were degenerate."""


class NoRegistrationError(StitchError):
    """No candidate registration survived screening and deduplication."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class EmptyProblemError(StitchError):
    """A blending problem has no valid pixels."""


class EvaluationError(StitchError):
    """Metric inputs are incompatible (dimensions, masks)."""


class ConfigError(StitchError):
    """A configuration file or flag value is invalid."""


class SizeError(StitchError):
    """A problem instance is too large for exhaustive enumeration."""
