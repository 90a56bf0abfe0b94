"""Exception hierarchy shared by every module of the package."""


class TrFunnelError(Exception):
    """Base class for all package errors."""


class NonFiniteValue(TrFunnelError, ArithmeticError):
    """A glass-box or black-box evaluation produced NaN or Inf."""


class BoundsViolation(TrFunnelError, ValueError):
    """A black-box input lies outside its declared box."""


class DegenerateGeometry(TrFunnelError):
    """A sample design is rank-deficient for the requested model form."""


class SingularFit(TrFunnelError):
    """The model's normal equations or kernel matrix are numerically singular."""


class UnknownProblem(TrFunnelError, KeyError):
    """No bundled benchmark is registered under the requested name."""

    def __str__(self):
        return Exception.__str__(self)


class ConfigError(TrFunnelError, ValueError):
    """A configuration value violates its admissible domain."""


class RestorationFailed(TrFunnelError):
    """The restoration phase exhausted its budget without regaining compatibility."""
