"""Exception types raised across the package."""


class PhaseAmpError(Exception):
    """Base class for all package errors."""


class CutoffError(PhaseAmpError):
    """The Fock truncation is too small, or the required cutoff exceeds the policy limit."""


class HeraldImpossibleError(PhaseAmpError):
    """The heralding event has (numerically) zero probability."""

    def __init__(self, message, M=None):
        super().__init__(message)
        self.M = M


class SeriesError(PhaseAmpError):
    """A closed-form series failed to converge."""


class IntegrationError(PhaseAmpError):
    """Adaptive quadrature did not reach the requested accuracy."""


class UndefinedReferenceError(PhaseAmpError):
    """A normalized figure of merit was requested against a zero-amplitude reference."""


class TomographyError(PhaseAmpError):
    """Maximum-likelihood reconstruction misbehaved (e.g. likelihood decreased)."""


class ConfigError(PhaseAmpError):
    """Invalid run configuration."""
