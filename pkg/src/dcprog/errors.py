"""Exception types raised across the package."""


class DcprogError(Exception):
    """Base class for all package errors."""


class ShapeError(DcprogError, ValueError):
    """Operands have incompatible shapes."""


class DomainViolation(DcprogError, ValueError):
    """An expression was evaluated outside its domain."""


class NotDifferentiable(DcprogError, ArithmeticError):
    """No gradient, subgradient or supergradient exists at the point."""


class NotDcp(DcprogError):
    """A problem does not satisfy the DCP rules required by an operation."""


class NotDccp(DcprogError):
    """A problem has an expression of unknown curvature."""


class InitializationFailed(DcprogError):
    """No usable starting point could be produced."""


class SubproblemFailed(DcprogError):
    """The cone solver did not return a usable solution for a subproblem."""
