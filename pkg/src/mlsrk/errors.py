"""Exception types shared across the package."""


class MlsrkError(Exception):
    """Base class for all package errors."""


class NumericalDomainError(MlsrkError):
    """A drift/diffusion/stage evaluation produced a non-finite value."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class UnsupportedDimensionError(MlsrkError):
    """Operation requires a different state dimension than the model has."""


class CannotCoarsenError(MlsrkError):
    """Level-0 increments admit no coarser dyadic grid."""


class DegenerateWeightsError(MlsrkError):
    """All particle weights are zero or non-finite."""


class FilterCollapseError(MlsrkError):
    """Particle filter weights degenerated while assimilating an observation."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EpsilonTooLargeError(MlsrkError):
    """Requested accuracy gives a finest level below the coarsest level."""


class ConfigError(MlsrkError):
    """Invalid experiment configuration."""
