"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or dimensions of inputs do not match what an operation expects."""


class ExponentOverflow(OverflowError):
    """An argument to exp exceeded the configured clamp.

    Divergent runs deliberately push exponents toward infinity; the clamp
    turns that into a signaled, recoverable condition instead of silent Inf
    propagation.
    """


class InvalidTarget(ValueError):
    """A loss target is malformed (e.g. cross-entropy target not a probability vector)."""


class BudgetError(RuntimeError):
    """A brute-force computation would exceed its configured size budget."""


class UnknownFixture(KeyError):
    """Requested a named analytic fixture that is not registered."""


class ConfigError(ValueError):
    """Run configuration text failed to parse or validate."""


class DataError(IOError):
    """Dataset file missing or malformed."""
