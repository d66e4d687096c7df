"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class DataError(ValueError):
    """Input data violates a documented invariant."""


class StrokeParseError(DataError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class CheckpointError(ValueError):
    """Checkpoint file is unreadable, truncated or inconsistent."""


class ConfigError(ContractError):
    """A configuration key is unknown or holds an invalid value."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
