"""Exception hierarchy.

Every validation failure raised by the library derives from
:class:`GaitShapError` (itself a ``ValueError``), so callers and the CLI can
tell bad input apart from I/O problems (``OSError``).
"""


class GaitShapError(ValueError):
    """Base class for all library validation errors."""


# ingestion / signal processing
class MissingColumn(GaitShapError):
    pass


class NonNumericCell(GaitShapError):
    def __init__(self, row: int, column: str = "", value: str = ""):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric cell in data row {row}, column {column!r}: {value!r}")


class EmptyFile(GaitShapError):
    pass


class CutoffOutOfRange(GaitShapError):
    pass


class TraceTooShort(GaitShapError):
    pass


class SequenceTooShort(GaitShapError):
    pass


# segmentation
class NoEventsDetected(GaitShapError):
    pass


class InsufficientEvents(GaitShapError):
    pass


class TooFewSubjects(GaitShapError):
    pass


class InvalidParams(GaitShapError):
    pass


# networks
class ShapeMismatch(GaitShapError):
    pass


class ZeroBatch(GaitShapError):
    pass


class EmptyDataset(GaitShapError):
    pass


# hyperparameter search
class OutOfBounds(GaitShapError):
    pass


class SingularKernel(GaitShapError):
    pass


# evaluation
class LengthMismatch(GaitShapError):
    pass


class EmptyInput(GaitShapError):
    pass


class EmptyMatrix(GaitShapError):
    pass


class OneClassOnly(GaitShapError):
    pass


# explanation
class InvalidWindow(GaitShapError):
    pass


class TooManyFeatures(GaitShapError):
    pass


# persistence
class CorruptArchive(GaitShapError):
    pass


class VersionMismatch(GaitShapError):
    pass
