"""Exception types shared across the package."""


class EigenbenchError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EigenbenchError):
    """An argument violates a documented precondition."""


class ConvergenceError(EigenbenchError):
    """Iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ManifestError(EigenbenchError):
    """Manifest file missing or malformed; carries the offending line number."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ImageFormatError(EigenbenchError):
    """Image file unreadable or not in a supported format."""


class DimensionMismatchError(EigenbenchError):
    """Vector/matrix/image dimensions disagree with what was expected."""


class DegenerateTrainingError(EigenbenchError):
    """Training set carries no variance; no eigenfaces can be extracted."""


class EmptySelectionError(EigenbenchError):
    """A selection rule removed every eigenface."""


class ModelFormatError(EigenbenchError):
    """Model file corrupt: bad magic, truncation, or checksum failure."""


class UnsupportedVersionError(ModelFormatError):
    """Model file written by a newer format version."""
