"""Exception hierarchy shared by every jumplab module."""


class JumpLabError(Exception):
    """Base class for all errors raised by jumplab."""


class InvalidArgument(JumpLabError, ValueError):
    pass


class InsufficientData(JumpLabError, ValueError):
    """The path is too short for the requested tuning."""


class DegeneratePath(JumpLabError, ArithmeticError):
    """A statistic's denominator vanishes (e.g. a constant path)."""


class DegenerateVariance(JumpLabError, ArithmeticError):
    """A variance estimate is zero, so standardization is impossible."""


class NumericFailure(JumpLabError, ArithmeticError):
    pass


class ParseError(JumpLabError, ValueError):
    pass


class FlaggedFlat(JumpLabError, ValueError):
    """The session's price path never moves."""
