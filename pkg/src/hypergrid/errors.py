"""Exception types shared across the package."""


class HypergridError(Exception):
    """Base class for errors raised by this package."""


class FormatError(HypergridError):
    """A file or payload does not conform to its declared format."""


class ConfigError(HypergridError):
    """Service or CLI configuration is invalid or incomplete."""
