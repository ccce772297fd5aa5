"""
Exception hierarchy for kernkit.

Library code raises these; only the command-line layer turns them into
``code: message`` lines and process exit codes.
"""


class KernkitError(Exception):
    """Base class for all kernkit errors."""

    code = "runtime_error"
    exit_code = 3

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def one_line(self) -> str:
        """Render as a single machine-parseable ``code: message`` line."""
        text = " ".join(self.message.split())
        return f"{self.code}: {text}"


class UsageError(KernkitError):
    """Bad command-line usage."""

    code = "usage_error"
    exit_code = 1


class DataValidationError(KernkitError):
    """Input data or configuration failed validation."""

    code = "validation_error"
    exit_code = 2


class ShapeError(DataValidationError, ValueError):
    """Array shapes are incompatible."""

    code = "shape_error"


class MissingGlyphError(DataValidationError):
    """A font record directory lacks a glyph raster."""

    code = "missing_glyph"

    def __init__(self, label: str):
        super().__init__(f"missing glyph: {label}")
        self.label = label


class EmptyGlyphError(DataValidationError):
    """A glyph raster has no ink."""

    code = "empty_glyph"


class SplitError(DataValidationError):
    """Split manifest is invalid or references unknown fonts."""

    code = "split_error"


class ConfigError(DataValidationError):
    """Configuration file or flags are invalid."""

    code = "config_error"


class CheckpointError(DataValidationError):
    """Checkpoint file cannot be decoded."""

    code = "checkpoint_error"


class BadMagicError(CheckpointError):
    code = "bad_magic"


class TruncatedPayloadError(CheckpointError):
    code = "truncated_payload"


class UnknownDtypeError(CheckpointError):
    code = "unknown_dtype"


class NumericError(KernkitError):
    """Non-finite values or other numeric failure."""

    code = "numeric_error"


class TrainingDivergedError(NumericError):
    """Loss became NaN during training."""

    code = "training_diverged"

    def __init__(self, epoch: int, step: int, message: str = "loss is not finite"):
        super().__init__(f"{message} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


class CapacityError(KernkitError):
    """Request exceeds a configured capacity (token budget)."""

    code = "capacity_error"


class StorageError(KernkitError):
    """Reading or writing an artefact on disk failed."""

    code = "storage_error"
