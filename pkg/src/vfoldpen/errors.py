"""Exception hierarchy shared by every module of the package."""


class VFoldError(Exception):
    """Base class for all errors raised by vfoldpen."""


class InvalidSize(VFoldError, ValueError):
    pass


class UndefinedEstimator(VFoldError):
    """A histogram fit has an empty cell, so the predictor is undefined there."""


class QuadratureFailure(VFoldError, ArithmeticError):
    pass


class EmptyAdmissibleSet(VFoldError):
    pass


class InvalidV(VFoldError, ValueError):
    pass


class EmptyCell(VFoldError, ValueError):
    pass


class UndefinedTrainingFit(VFoldError):
    """Removing a block of observations empties at least one cell of the model."""


class CellTooSmall(VFoldError, ValueError):
    pass


class OddSampleSize(VFoldError, ValueError):
    pass


class NoAdmissibleModel(VFoldError):
    pass


class DegenerateCell(VFoldError, ValueError):
    pass


class DomainError(VFoldError, ValueError):
    pass


class UnknownFunction(VFoldError, KeyError):
    pass


class ConfigError(VFoldError, ValueError):
    pass
