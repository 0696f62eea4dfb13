"""Exception hierarchy for opcalc."""


class OpcalcError(ValueError):
    """Base class for all opcalc errors."""


class NotHermitian(OpcalcError):
    pass


class DimensionMismatch(OpcalcError):
    pass


class ShapeMismatch(DimensionMismatch):
    """Operators in one request do not share a block structure."""


class FunctionDomain(OpcalcError):
    pass


class OrderExceeded(OpcalcError):
    """Requested derivative order is above the function's certified class."""


class QuadratureBudgetExceeded(OpcalcError):
    pass


class KernelDomain(OpcalcError):
    pass


class NotCompressed(OpcalcError):
    pass


class PartitionBudgetExceeded(OpcalcError):
    pass


class EndpointKernel(OpcalcError):
    """The level mu is an eigenvalue of an endpoint operator."""


class ConfigParse(OpcalcError):
    pass
