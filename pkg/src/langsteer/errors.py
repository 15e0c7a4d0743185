"""Exception taxonomy shared across the package."""


class DimensionError(ValueError):
    """Array shapes or widths don't match what an operation requires."""


class NumericError(ValueError):
    """Non-finite values, zero norms, or other numeric contract breaks."""


class StateError(RuntimeError):
    """An operation was called before its prerequisites were established."""


class UsageError(RuntimeError):
    """An operation was called on a model variant that doesn't support it."""


class GenerationError(RuntimeError):
    """Scripted demonstration generation could not complete the task."""


class ConfigError(Exception):
    """A config file is missing, malformed, or inconsistent."""
