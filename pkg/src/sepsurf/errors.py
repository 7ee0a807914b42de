"""Exception types shared across the package."""


class SepsurfError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SepsurfError):
    """Invalid planar-configuration data."""


class MissingHeaderError(ConfigError):
    """Tabulated file lacks the masses or period header line."""


class NonMonotoneGridError(ConfigError):
    """Tabulated phase grid is not strictly increasing from 0 to the period."""


class NegativeRadiusError(ConfigError):
    """A radius (or dilation) value is negative."""


class PeriodicClosureError(ConfigError):
    """First and last tabulated rows disagree beyond tolerance."""


class NumericalError(SepsurfError):
    """Base class for runtime numerical failures (CLI exit code 3)."""


class IntegrationBlowupError(NumericalError):
    """Integration produced a non-finite state."""


class BracketError(NumericalError):
    """Bisection bracket endpoints classified inconsistently."""


class StepSizeError(NumericalError):
    """Dilation vanished away from any declared collision window."""
