"""Exception hierarchy. Each class maps to a CLI exit code."""


class VanidealError(Exception):
    exit_code = 1


class ConfigError(VanidealError, ValueError):
    """Out-of-range or inconsistent parameters."""

    exit_code = 2


class DataError(VanidealError, ValueError):
    """Malformed, empty or dimensionally incompatible input data."""

    exit_code = 3


class NumericalError(VanidealError, ArithmeticError):
    """Non-finite values, failed eigensolves, diverging training."""

    exit_code = 4
