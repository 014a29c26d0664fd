"""Exception types raised across the package."""


class UGBMError(Exception):
    """Base class for all package errors."""


class MissingColumn(UGBMError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"missing column: {self.name!r}"


class ParseError(UGBMError, ValueError):
    def __init__(self, row, col, cell=None):
        self.row, self.col, self.cell = row, col, cell
        super().__init__(f"cannot parse {cell!r} as a number at row {row}, column {col!r}")


class EmptyFile(UGBMError, ValueError):
    pass


class DegenerateRatios(UGBMError, ValueError):
    pass


class DegenerateSplit(UGBMError, ValueError):
    pass


class LengthMismatch(UGBMError, ValueError):
    pass


class InvalidTarget(UGBMError, ValueError):
    pass


class EmptyTargets(UGBMError, ValueError):
    pass


class EmptyInput(UGBMError, ValueError):
    pass


class ZeroHessian(UGBMError, ValueError):
    pass


class InvalidCandidate(UGBMError, ValueError):
    pass


class DegenerateDataset(UGBMError, ValueError):
    pass


class NonFiniteGradient(UGBMError, FloatingPointError):
    pass


class SchemaMismatch(UGBMError, ValueError):
    pass


class FormatVersionMismatch(UGBMError, ValueError):
    pass


class CorruptModel(UGBMError, ValueError):
    pass


class WrongMode(UGBMError, ValueError):
    pass


class EmptyOob(UGBMError, ValueError):
    pass


class SingleClass(UGBMError, ValueError):
    pass
