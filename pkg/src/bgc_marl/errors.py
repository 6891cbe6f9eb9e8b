class BGCError(Exception):
    """Base class for package errors."""


class ConfigError(BGCError, ValueError):
    """Invalid configuration value or missing/unknown field."""


class ContractViolation(BGCError, ValueError):
    """Caller broke an operation precondition."""


class NumericError(BGCError, FloatingPointError):
    """Non-finite values where finite ones are required."""


class CheckpointError(BGCError, RuntimeError):
    """Checkpoint missing, unreadable, or incompatible with the config."""
