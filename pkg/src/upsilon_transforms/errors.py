"""Exception classes shared across the package."""


class UpsilonError(Exception):
    """Base class for all package errors."""


class NonConvergence(UpsilonError, ArithmeticError):
    """Adaptive quadrature did not reach its tolerance within budget."""

    def __init__(self, message, value=None, error_estimate=None):
        super().__init__(message)
        self.value = value
        self.error_estimate = error_estimate


class DivergentHint(UpsilonError, ValueError):
    """A singularity hint declares a non-integrable endpoint (exponent <= -1)."""


class DomainError(UpsilonError, ValueError):
    """Argument outside the mathematical domain of a function."""


class StableIndexError(UpsilonError, IndexError, ValueError):
    """Stable index r outside the open interval (0, 1)."""


class MomentDiverges(UpsilonError, ValueError):
    """Requested fractional moment is infinite."""


class SpecError(UpsilonError, ValueError):
    """Malformed measure description. ``problems`` lists field-level diagnostics."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DimensionMismatch(UpsilonError, ValueError):
    pass


class ParamError(UpsilonError, ValueError):
    """Kernel or identity parameters violate their preconditions."""


class MetadataError(UpsilonError, ValueError):
    """Declared metadata of a dilation measure failed its spot check."""


class NotInDomain(UpsilonError):
    """Measure is outside the domain of an upsilon transform."""

    def __init__(self, message, domain=None):
        super().__init__(message)
        self.domain = domain


class DomainMismatch(UpsilonError):
    """Two sides of an identity disagree about domain membership."""


class ConfigError(UpsilonError, ValueError):
    """Simulation configuration cannot meet its accuracy contract."""
