"""Exception types raised across the package."""


class CgtexError(Exception):
    """Base class for all errors raised by cgtex."""


class ContractError(CgtexError, ValueError):
    """A caller violated an operation's precondition."""


class ShapeError(ContractError):
    """Tensor extents do not line up for the requested operation."""


class GeometryError(ShapeError):
    """A layer stack or convolution collapses a map to zero extent."""


class SpecError(ContractError):
    """A network or job specification is invalid."""


class FormatError(CgtexError, ValueError):
    """A file exists but is not in a supported layout."""


class NumericalError(CgtexError, FloatingPointError):
    """A non-finite value appeared where bounded arithmetic forbids it."""
