"""Exception taxonomy used across the package."""

__all__ = [
    "ThermalabError",
    "ConfigurationError",
    "UsageError",
    "ResourceError",
    "NumericalError",
    "DomainError",
    "FitRejected",
]


class ThermalabError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(ThermalabError):
    """Bad or inconsistent run configuration."""


class UsageError(ThermalabError):
    """API misuse: incompatible arguments, wrong sector, unknown identifier."""


class ResourceError(ThermalabError):
    """Request exceeds a configured size guard (memory/time protection)."""


class NumericalError(ThermalabError):
    """A numerical routine failed to converge or lost too much accuracy."""


class DomainError(ThermalabError):
    """Value outside the physically meaningful domain (e.g. energy density)."""


class FitRejected(ThermalabError):
    """A fit did not meet its acceptance requirements."""
