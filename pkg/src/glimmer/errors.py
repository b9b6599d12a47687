"""Exception types shared across the toolkit.

Data ingestion, training, and checkpoint I/O each raise a distinct error
class so the CLI can map failures to stable exit codes.
"""


class GlimmerError(Exception):
    """Base class for all toolkit errors."""


class DataError(GlimmerError):
    """Base class for data ingestion and preparation failures."""


class FormatError(DataError):
    """CSV header or overall file structure is wrong."""


class RowError(DataError):
    """A single CSV row is invalid. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class OrderingError(DataError):
    """Timestamps in a series are not strictly increasing."""


class SplitError(DataError):
    """A chronological split would leave one side empty."""


class ShapeError(GlimmerError):
    """Array shapes are inconsistent with the model architecture."""


class NumericError(GlimmerError):
    """A non-finite value appeared during training. Carries the epoch index."""

    def __init__(self, epoch: int, message: str = "non-finite value during training"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class CheckpointError(GlimmerError):
    """Checkpoint document is corrupt, truncated, or has a bad version."""
