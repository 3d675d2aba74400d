"""Errors raised by abcdkit."""

from typing import Optional


class AbcdError(RuntimeError):
    """Base class for errors raised by abcdkit."""

    def details(self) -> dict:
        return {}


class SchemaError(AbcdError):
    """Raised if a dataset or schema file is missing a required column or key."""

    def __init__(self, msg: str, column: Optional[str] = None):
        super().__init__(msg)
        self.column = column

    def details(self) -> dict:
        return {"column": self.column}


class ParseError(AbcdError, ValueError):
    """Raised if a data cell cannot be parsed."""

    def __init__(self, msg: str, row: int, column: Optional[str] = None):
        super().__init__(msg)
        self.row = row
        self.column = column

    def details(self) -> dict:
        return {"row": self.row, "column": self.column}


class DomainError(AbcdError, ValueError):
    """Raised if a value is outside the domain of an operation."""


class DegenerateScaleError(AbcdError, ValueError):
    """Raised if an ordinal variable takes a single level only."""


class InsufficientDataError(AbcdError, ValueError):
    """Raised if there are not enough observations for an estimate."""


class SingularDesignError(AbcdError, ValueError):
    """Raised if a design matrix is rank deficient."""

    def __init__(self, msg: str, column: Optional[str] = None):
        super().__init__(msg)
        self.column = column

    def details(self) -> dict:
        return {"column": self.column}


class NestingError(AbcdError, ValueError):
    """Raised if a restricted model fits better than the model it is nested in."""


class CodingError(AbcdError, ValueError):
    """Raised if anchor conditions cannot be coded as requested."""


class NoFirstStageError(AbcdError):
    """Raised if the first stage does not identify the endogenous belief."""


class ZeroFirstStageError(NoFirstStageError):
    """Raised if the anchor groups have the same mean belief."""


class GroupingError(AbcdError, ValueError):
    """Raised if the data does not split into a high and a low anchor group."""


class UnderdeterminedError(AbcdError, ValueError):
    """Raised if a response curve has fewer distinct anchors than coefficients."""


class DegenerateCurveError(AbcdError, ValueError):
    """Raised if a response curve is flat."""


class DegenerateBaselineError(AbcdError, ValueError):
    """Raised if a baseline belief distribution is constant."""


class ExtrapolationError(AbcdError, ValueError):
    """Raised if a response curve is evaluated outside its domain."""


class AlignmentError(AbcdError, ValueError):
    """Raised if experiments are not measured on the same participants."""


class ConfigError(AbcdError, ValueError):
    """Raised if a simulation or run configuration is invalid."""


class ZeroSpreadError(AbcdError, ValueError):
    """Raised if a smoother is given values without any spread."""
