class ConfigError(ValueError):
    """Physically inconsistent or malformed configuration."""


class NumericalError(ArithmeticError):
    """A factorization, eigen-solve or consistency check failed."""
