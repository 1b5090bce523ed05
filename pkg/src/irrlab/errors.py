"""Error types shared by the lab modules."""


class IrrlabError(Exception):
    """Base class for all lab errors."""


class InputError(IrrlabError, ValueError):
    """Invalid argument or malformed input data."""


class ResourceError(IrrlabError, MemoryError):
    """Requested computation would exceed the configured memory cap."""


class UnsupportedError(IrrlabError, NotImplementedError):
    """Operation has no closed form / implementation for this model."""
