# advdenoise/utils/errors.py

class AdvDenoiseError(Exception):
    """Base exception for advdenoise errors."""
    exit_code = 1

class ValidationError(AdvDenoiseError, ValueError):
    """Raised when an argument violates an operation's precondition."""
    exit_code = 3

class ShapeError(ValidationError):
    """Raised when tensor shapes or channel counts do not agree."""
    pass

class ConfigError(AdvDenoiseError):
    """Raised for invalid configuration values or training plans."""
    exit_code = 3

class ConfigMismatchError(ConfigError):
    """Raised when an artifact was produced under a different configuration."""
    pass

class PrerequisiteError(AdvDenoiseError):
    """Raised when a training phase is requested without its predecessor."""
    exit_code = 4

class NumericalError(AdvDenoiseError):
    """Raised when non-finite values reach an optimizer update."""
    exit_code = 5

class NonFiniteLossError(NumericalError):
    """Raised when a training loss becomes NaN or infinite."""

    def __init__(self, phase: str, iteration: int, losses: dict):
        self.phase = phase
        self.iteration = iteration
        self.losses = dict(losses)
        terms = ", ".join(f"{k}={v!r}" for k, v in self.losses.items())
        super().__init__(
            f"Non-finite loss in phase {phase} at iteration {iteration}: {terms}"
        )

class StorageError(AdvDenoiseError):
    """Base class for file-related errors."""
    exit_code = 6

class CheckpointError(StorageError):
    """Base class for checkpoint decoding errors."""
    pass

class CheckpointFormatError(CheckpointError):
    """Raised when a file is not a checkpoint of the expected kind."""
    pass

class CheckpointVersionError(CheckpointError):
    """Raised when the checkpoint format version is not supported."""
    pass

class CheckpointTruncatedError(CheckpointError):
    """Raised when a checkpoint ends before its declared content."""
    pass

class CheckpointShapeError(CheckpointError):
    """Raised when stored parameters do not fit the declared architecture."""
    pass

class ImageError(StorageError):
    """Base class for image ingestion errors."""
    pass

class ImageFormatError(ImageError):
    """Raised when an image file cannot be decoded."""
    pass

class UnsupportedBitDepthError(ImageError):
    """Raised for images that are not 8 bits per channel."""
    pass

class DatasetError(StorageError):
    """Raised for empty or overlapping datasets."""
    pass

class ReportError(StorageError):
    """Raised when a metrics file cannot be turned into a report."""
    pass
