"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""


class InfeasibleTargetError(ValueError):
    """A CTC target cannot be aligned to the available number of frames."""


class CorruptionError(RuntimeError):
    """On-disk data does not match the digests recorded in its manifest."""
