"""Exception types shared across the package."""


class IianetError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(IianetError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(IianetError, ValueError):
    """An architectural or runtime configuration violates a rule."""


class ContractError(IianetError, ValueError):
    """A caller broke an operation's precondition."""


class FormatError(IianetError, ValueError):
    """A serialized file (checkpoint, image, config) is malformed."""


class LoadError(IianetError, OSError):
    """A dataset source could not be read."""
