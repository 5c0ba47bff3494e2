"""Exception and warning types shared across the package."""


class NotFactorizable(ValueError):
    """Covariance could not be Cholesky-factored even with the largest jitter."""


class FilterDiverged(ArithmeticError):
    """A filter produced non-finite numbers or a singular innovation covariance."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class WindowTooLarge(ValueError):
    pass


class SeriesTooShort(ValueError):
    pass


class SingularRegression(ValueError):
    pass


class DegenerateData(ValueError):
    pass


class InfiniteDivergence(ValueError):
    pass


class IngestError(ValueError):
    """Base class for malformed input files."""


class ParseError(IngestError):
    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}" + (f", column {column}" if column else "") + ")" if line else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


class GapError(IngestError):
    def __init__(self, missing_year):
        super().__init__(f"missing year {missing_year}")
        self.missing_year = missing_year


class UnitError(IngestError):
    pass


class NoOverlap(IngestError):
    pass


class WeightCollapseWarning(RuntimeWarning):
    """Effective sample size dropped below 1% of the particle count."""


class NonStationaryWarning(RuntimeWarning):
    """Best ADF p-value is not below the 0.05 significance level."""
