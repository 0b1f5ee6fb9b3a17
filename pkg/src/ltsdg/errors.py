class ConfigError(ValueError):
    """Invalid run configuration or boundary-condition setup."""


class ParameterError(ValueError):
    """Out-of-range numerical parameter."""


class NumericalError(RuntimeError):
    """A solve or time step failed (non-convergence, singular system, ...)."""
