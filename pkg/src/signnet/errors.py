"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, data/format/config
errors exit 2, numeric divergence exits 3.
"""


class ShapeError(ValueError):
    """Tensor shapes do not line up for the requested operation."""


class ParameterError(ValueError):
    """An argument value is outside its documented domain."""


class StateError(RuntimeError):
    """Operation requires state that is missing, e.g. backward before forward."""


class FormatError(ValueError):
    """A byte stream does not conform to its file format."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """A model configuration is malformed or internally inconsistent."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(ValueError):
    """A checkpoint file is corrupt or does not match the declared graph."""

    def __init__(self, message: str, field: str | None = None):
        if field is not None:
            message = f"{message} (field: {field})"
        super().__init__(message)
        self.field = field


class NumericError(ArithmeticError):
    """A numeric quantity became non-finite where finiteness is required."""


class TrainingDiverged(NumericError):
    """Training loss became non-finite; carries the partial report."""

    def __init__(self, epoch: int, batch: int, report=None):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.report = report


class UsageError(Exception):
    """Command line was not a valid invocation."""
