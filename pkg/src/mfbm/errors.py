"""Exception hierarchy.

``ConfigError`` maps to CLI exit code 2, every ``NumericalError`` to 3.
"""


class MfbmError(Exception):
    pass


class ConfigError(MfbmError, ValueError):
    """Invalid configuration or violated input contract."""


class DomainError(ConfigError):
    """Argument outside the admissible domain of an operation."""


class ContractError(ConfigError):
    """Precondition of an operation violated by the supplied data."""


class CapabilityError(ConfigError):
    """Coefficient family lacks something the operation needs (e.g. a derivative)."""


class OutOfRangeError(DomainError):
    """Evaluation point outside a tabulated range."""


class RegimeError(ConfigError):
    """Scale schedule is not in the delta/epsilon -> 0 regime."""


class NumericalError(MfbmError, ArithmeticError):
    pass


class DecompositionError(NumericalError):
    """Covariance matrix is not numerically positive definite."""


class StiffnessError(NumericalError):
    """Supplied grid cannot resolve the fast time scale."""


class DivergenceError(NumericalError):
    """Non-finite state encountered while stepping."""


class SingularControlError(NumericalError):
    """Diffusion operator too ill-conditioned to invert along a path."""


class IntegrabilityError(NumericalError):
    """Fractional norm of an integrand/integrator exceeds the finiteness cap."""
