"""Exception hierarchy shared by all modules."""


class LesionUncError(Exception):
    """Base class for every data error raised by the package."""


class NiftiError(LesionUncError):
    pass


class UnsupportedDatatype(NiftiError):
    pass


class CorruptHeader(NiftiError):
    pass


class TruncatedData(NiftiError):
    pass


class InvalidDims(LesionUncError, ValueError):
    pass


class LabelOverflow(LesionUncError, ValueError):
    pass


class IoFailure(LesionUncError, OSError):
    pass


class TableError(LesionUncError):
    pass


class RaggedRow(TableError):
    pass


class NonNumericCell(TableError):
    pass


class DuplicateColumn(TableError):
    pass


class DimMismatch(LesionUncError, ValueError):
    pass


class BothEmpty(LesionUncError, ValueError):
    pass


class NonFiniteInput(LesionUncError, ValueError):
    pass


class ConstantTarget(LesionUncError, ValueError):
    pass


class TooFewGroups(LesionUncError, ValueError):
    pass


class SpecInfeasible(LesionUncError):
    pass
