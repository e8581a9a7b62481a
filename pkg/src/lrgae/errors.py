"""Exception types raised across the package."""


class LrgaeError(Exception):
    """Base class for all package errors."""


class DimensionError(LrgaeError, ValueError):
    pass


class DomainError(LrgaeError, ValueError):
    pass


class ContractError(LrgaeError, ValueError):
    """A documented precondition of an operation was violated."""


class ParseError(LrgaeError, ValueError):
    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class GraphValidationError(LrgaeError, ValueError):
    pass


class CapacityError(LrgaeError, ValueError):
    pass


class ConfigError(LrgaeError, ValueError):
    """Invalid configuration. ``field`` is a dotted path into the config, when known."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class TrainingError(LrgaeError, RuntimeError):
    pass
