"""Exception types shared across the package."""


class NkfError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(NkfError):
    """Invalid configuration value or unparseable config file."""


class DataError(NkfError):
    """Malformed, inconsistent, or unsupported input data."""


class NumericsError(NkfError):
    """Degenerate or divergent numerical condition (filter or training)."""
