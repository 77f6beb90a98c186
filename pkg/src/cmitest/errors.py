"""Exception hierarchy shared across the package."""


class CMIError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(CMIError, ValueError):
    pass


class InvalidDataError(CMIError, ValueError):
    pass


class InvalidMeasureError(CMIError, ValueError):
    pass


class InvalidBandwidthError(CMIError, ValueError):
    pass


class NoDataInWindowError(CMIError, ArithmeticError):
    """Kernel estimate requested at a point with no observations in the window."""


class DegenerateDesignError(CMIError, ValueError):
    pass


class SpecMismatchError(CMIError, ValueError):
    """A statistic and a critical value were computed under different specs."""


class UnsupportedSpecError(CMIError, ValueError):
    pass


class EnlargeDomainError(CMIError, ArithmeticError):
    """Quadrature truncation box too small: integrand nonzero on its boundary."""


class ConfigError(CMIError, ValueError):
    """Configuration failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
