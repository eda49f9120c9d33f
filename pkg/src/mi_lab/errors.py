"""Exception types shared across the package."""


class UsageError(ValueError):
    """Bad arguments, shapes or configuration supplied by the caller."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class InfiniteDivergenceError(NumericError):
    """KL divergence is infinite: q assigns zero mass where p does not."""
