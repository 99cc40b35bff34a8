"""Exceptions shared across the pipeline, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


class MissingInputError(FileNotFoundError):
    """A referenced input file or checkpoint does not exist (exit code 3)."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite (exit code 4)."""
