"""Exception vocabulary shared by all doasep modules."""


class DoasepError(Exception):
    """Base class for all errors raised by this package."""


class GridError(DoasepError):
    """Wavelength grids are non-uniform or do not match."""


class ParseError(DoasepError):
    """A spectra CSV file is malformed."""


class IoError(DoasepError):
    """A file could not be read or written."""


class DomainError(DoasepError):
    """An input value lies outside the mathematical domain of an operation."""


class RangeError(DoasepError):
    """A requested wavelength range is not covered by the source data."""


class KernelError(DoasepError):
    """A convolution kernel is unnormalized or too long for the signal."""


class SizeError(DoasepError):
    """An input array is too short for the operation."""


class EnvelopeError(DoasepError):
    """Too few extrema to build a spline envelope; sifting must stop."""


class NoImfError(DoasepError):
    """The signal carries no oscillation to extract (e.g. monotone input)."""


class DegenerateInputError(DoasepError):
    """Every column of the input is constant; nothing to decompose."""


class ParamError(DoasepError):
    """A configuration parameter is out of its valid range."""


class RankError(DoasepError):
    """The reference matrix is rank deficient; the fit would be ambiguous."""


class PreconditionError(DoasepError):
    """A documented precondition of the operation is violated."""


class SymmetryError(DoasepError):
    """A matrix expected to be symmetric is not."""


class DegenerateError(DoasepError):
    """Data has zero variance where nonzero variance is required."""


class ConfigError(DoasepError):
    """A scene or pipeline configuration is invalid."""
