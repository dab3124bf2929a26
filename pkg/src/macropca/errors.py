"""Exception and warning types shared across the package."""


class MacroPcaError(Exception):
    """Base class for errors raised by this package."""


class CsvParseError(MacroPcaError):
    """A CSV cell could not be parsed as a number or NA token."""


class DimensionError(MacroPcaError):
    """Inputs whose shapes are incompatible with each other or a model."""


class NumericError(MacroPcaError):
    """A numeric procedure received degenerate input it cannot recover from."""


class InsufficientDataWarning(UserWarning):
    """Robust estimator had too little usable data and returned a fallback."""


class DegenerateDataWarning(UserWarning):
    """Input degeneracy (zero scale, rank deficiency) handled by a fallback."""
