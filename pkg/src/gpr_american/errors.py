"""Exception types raised across the package."""


class PricingError(Exception):
    """Base class for every error raised by gpr_american."""


class NotPositiveDefinite(PricingError, ValueError):
    pass


class DimensionMismatch(PricingError, ValueError):
    pass


class InvalidExponent(PricingError, ValueError):
    pass


class OutOfRange(PricingError, ValueError):
    pass


class DimensionTooLarge(PricingError, ValueError):
    pass


class TreeTooDeep(PricingError, ValueError):
    pass


class FitFailed(PricingError, RuntimeError):
    pass


class ConfigInvalid(PricingError, ValueError):
    pass
