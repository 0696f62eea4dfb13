"""Finite-dimensional operator calculus over block algebras with weighted traces."""

from .errors import OpcalcError
from .functions import WienerFunction
from .linalg import BlockOperator

__all__ = ["BlockOperator", "OpcalcError", "WienerFunction"]
__version__ = "0.1.0"
