"""Exception hierarchy shared by all modules."""


class RevstackError(Exception):
    """Base class for library errors."""


class UsageError(RevstackError, ValueError):
    """Bad arguments: dimension mismatch, out-of-range parameters."""


class DomainError(UsageError):
    """Point outside the differentiability region of a valuation."""


class NotHomogeneousError(RevstackError, TypeError):
    """Operation needs a homogeneous valuation."""


class ContractViolation(RevstackError):
    """A documented precondition of an operation does not hold."""


class ConfigError(UsageError):
    """Inconsistent algorithm configuration (e.g. unattainable accuracy)."""


class ModelError(RevstackError, ValueError):
    """Ill-posed model instance, e.g. a commodity with no path."""


class UnsupportedError(RevstackError, NotImplementedError):
    """Requested family or size is outside what is implemented."""


class SolverError(RevstackError, RuntimeError):
    """An iterative solver failed to certify its answer.

    ``residual`` carries the last certificate value (gradient mapping
    norm, Frank-Wolfe gap, ...) so callers can report it.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class NumericalError(SolverError):
    """Loss of numerical validity, e.g. an ellipsoid losing definiteness."""
