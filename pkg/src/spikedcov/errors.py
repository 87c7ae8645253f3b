"""Semantic exception types shared across the package."""


class SpikedCovError(Exception):
    """Base class for all package-specific errors."""


class DomainError(SpikedCovError, ValueError):
    """Input outside the region where a closed form is defined."""


class SubcriticalSpikeError(DomainError):
    """Spike at or below the phase transition where outlier formulas break down."""


class ResolventDomainError(DomainError):
    """Resolvent evaluation point inside (or too close to) the noise spectrum."""


class DegenerateSpectrumError(SpikedCovError):
    """Repeated eigenvalue where a simple one is required."""


class InvalidCumulantError(SpikedCovError):
    """Cumulant input inconsistent with any valid distribution."""


class EigensolverError(SpikedCovError):
    """Eigen-decomposition failed its residual check.

    Carries the replicate index when raised inside a Monte Carlo run.
    """

    def __init__(self, message, replicate=None):
        if replicate is not None:
            message = f"{message} (replicate {replicate})"
        super().__init__(message)
        self.replicate = replicate


class ConfigError(SpikedCovError, ValueError):
    """Malformed experiment or model configuration."""
