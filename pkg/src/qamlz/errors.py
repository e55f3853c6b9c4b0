"""Exception types shared across the package."""


class QamlzError(Exception):
    """Base class for package errors."""


class ConfigError(QamlzError):
    """Invalid configuration or parameters (CLI exit code 2)."""


class DataError(QamlzError):
    """Malformed or missing input data (CLI exit code 3)."""
