"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario or component was configured with invalid parameters."""


class DomainError(ValueError):
    """An evaluation was requested outside a function's admissible domain."""


class DataError(ValueError):
    """Tabulated input data is malformed or unusable."""


class IntegrationError(RuntimeError):
    """Time integration failed; carries a diagnostic payload."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
