"""Exception types raised across the package."""


class HypgraphError(Exception):
    """Base class for all package errors."""


# series
class ShapeMismatch(HypgraphError, ValueError):
    pass


class DivisionByZeroLeadingTerm(HypgraphError, ZeroDivisionError):
    pass


class NegativeSqrtLeadingTerm(HypgraphError, ValueError):
    pass


class IndexOutOfRange(HypgraphError, IndexError):
    pass


class UnboundedLogTerm(HypgraphError, ValueError):
    """A jet entry t^0 (log t)^j with j >= 1 would be nonzero."""


# geometry / barriers
class NonPositiveHeight(HypgraphError, ValueError):
    pass


class InvalidSigma(HypgraphError, ValueError):
    pass


class OutsideDomainDisk(HypgraphError, ValueError):
    pass


class OutsideSphere(HypgraphError, ValueError):
    pass


# expansion
class OrderNotReady(HypgraphError, ValueError):
    pass


class SingularRecursion(HypgraphError, ZeroDivisionError):
    pass


class HigherLogCapExceeded(HypgraphError, ValueError):
    pass


class InsufficientTangentialDegree(HypgraphError, ValueError):
    """The Taylor degree of the boundary data is too low for the requested order."""


class NonPositiveT(HypgraphError, ValueError):
    pass


class DerivativeOrderTooHigh(HypgraphError, ValueError):
    pass


# solver
class SolverError(HypgraphError, RuntimeError):
    """Newton failure. ``report`` carries the diagnostics gathered so far."""

    def __init__(self, message, report=None, field=None):
        super().__init__(message)
        self.report = report
        self.field = field


class NonFiniteValue(SolverError):
    pass


class MaxIterationsExceeded(SolverError):
    pass


class EllipticityLost(SolverError):
    pass


class LineSearchStalled(SolverError):
    pass


# verify / cli
class DegenerateSamples(HypgraphError, ValueError):
    pass


class MissingArtifact(HypgraphError, FileNotFoundError):
    pass


class ConfigError(HypgraphError, ValueError):
    def __init__(self, message, key=None, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.key = key
        self.line = line
