"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument value is outside its documented domain."""


class GeometryError(DomainError):
    """A geometric construction is impossible or self-intersecting."""


class SamplingError(RuntimeError):
    """Sample generation could not satisfy its constraints."""


class NumericalError(ArithmeticError):
    """A numeric routine encountered non-finite values."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or inconsistent."""


class ConfigError(ValueError):
    """A run configuration is malformed."""
