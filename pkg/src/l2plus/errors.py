"""Exception hierarchy shared by every module of the package."""


class L2PlusError(Exception):
    """Base class for domain errors (the CLI maps these to exit code 1)."""


class DimensionMismatch(L2PlusError, ValueError):
    pass


class NotHurwitz(L2PlusError):
    pass


class NotControllable(L2PlusError):
    pass


class NotMetzler(L2PlusError):
    pass


class NotSquare(L2PlusError):
    pass


class InvalidAlpha(L2PlusError, ValueError):
    pass


class DimensionTooLarge(L2PlusError, ValueError):
    pass


class StructureMismatch(L2PlusError):
    pass


class SolverError(L2PlusError):
    """Raised when a numerical backend fails or returns a non-optimal status."""
