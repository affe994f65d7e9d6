"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation (e.g. a zero-norm vector)."""


class TapeStateError(RuntimeError):
    """Backward called on a tensor that the active tape did not produce."""


class DataError(ValueError):
    """Malformed or unusable input data."""


class CheckpointError(ValueError):
    """Corrupt, truncated or mismatched checkpoint file."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""
