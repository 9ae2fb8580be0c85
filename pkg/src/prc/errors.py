"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A parameter lies outside its mathematical domain."""


class LengthError(ParameterError):
    """An input string has the wrong length for the key or scheme."""


class ConfigError(ValueError):
    """Unknown scheme, channel, strategy or experiment name."""


class PreconditionError(RuntimeError):
    """A construction precondition failed (e.g. alpha <= delta before amplifying)."""
