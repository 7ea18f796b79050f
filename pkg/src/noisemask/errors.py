"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A parameter or input violates a documented precondition."""


class DegenerateLOError(ValueError):
    """The beam-b local oscillator has no weight on any basis mode."""


class DegenerateParameterization(ArithmeticError):
    """The transmission does not vary along the scan, so dM/dT is undefined."""


class BoundaryExtremumError(ArithmeticError):
    """The extremum of a scanned noise curve sits on the scan boundary."""


class NoSignalError(ArithmeticError):
    """The measured noise is flat across the scan; nothing can be estimated."""


class ConfigError(ValueError):
    """A run configuration could not be parsed or failed validation."""
