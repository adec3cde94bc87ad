"""Exception types shared across the package, mapped to CLI exit codes."""


class GelflexError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigError(GelflexError):
    """Invalid configuration, arguments, or domain preconditions."""

    exit_code = 2


class DataIOError(GelflexError):
    """Failed to read or write an on-disk artifact."""

    exit_code = 3


class TrainingDiverged(GelflexError):
    """Non-finite loss encountered during training."""

    exit_code = 4

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step


class SchemaMismatch(GelflexError):
    """Artifact schema version does not match this build."""

    exit_code = 5
