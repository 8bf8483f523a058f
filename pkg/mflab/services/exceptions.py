"""
Custom exceptions for factorization services.

Three root classes group the failures by what the caller can do about them:
fix the configuration, fix the data, or accept that the numerics broke down.
The CLI maps them to exit codes 1, 2 and 3.
"""

from typing import Optional


class ConfigurationError(Exception):
    """Raised when a run or solver is configured inconsistently."""


class DatasetError(Exception):
    """Raised when input data is malformed or unusable."""


class NumericalError(Exception):
    """Raised when a computation cannot produce a finite, well-defined result."""


class DuplicateEntryError(DatasetError):
    """
    Raised when a rating matrix receives the same (user, item) pair twice.

    Indices are reported 0-based, as stored internally.
    """

    def __init__(self, user_index: int, item_index: int):
        self.user_index = user_index
        self.item_index = item_index

        message = f"Duplicate rating for (user={user_index}, item={item_index})"
        super().__init__(message)


class RatingOutOfRangeError(DatasetError):
    """Raised when a rating falls outside {1..R}."""

    def __init__(self, value: float, rating_levels: int):
        self.value = value
        self.rating_levels = rating_levels

        message = f"Rating {value} outside the allowed range 1..{rating_levels}"
        super().__init__(message)


class IndexOutOfRangeError(DatasetError):
    """Raised when a user or item index lies outside the matrix bounds."""

    def __init__(self, axis: str, index: int, bound: int):
        self.axis = axis
        self.index = index
        self.bound = bound

        message = f"{axis} index {index} outside [0, {bound})"
        super().__init__(message)


class ParseError(DatasetError):
    """Raised when a dataset line cannot be parsed."""

    def __init__(self, line: Optional[int], reason: str, path: Optional[str] = None):
        self.line = line
        self.reason = reason
        self.path = path

        location = f"{path}:" if path else ""
        location += f"line {line}" if line is not None else "unknown line"
        message = f"Cannot parse {location}: {reason}"
        super().__init__(message)


class RowCountMismatchError(DatasetError):
    """Raised when feature and label files disagree on the number of instances."""

    def __init__(self, feature_rows: int, label_rows: int):
        self.feature_rows = feature_rows
        self.label_rows = label_rows

        message = f"Feature file has {feature_rows} rows but label file has {label_rows}"
        super().__init__(message)


class NonBinaryLabelError(DatasetError):
    """Raised when a label entry is not one of {-1, +1} (or {0, 1} on load)."""

    def __init__(self, value: float, row: Optional[int] = None, column: Optional[int] = None):
        self.value = value
        self.row = row
        self.column = column

        where = f" at row {row}, column {column}" if row is not None else ""
        message = f"Label value {value}{where} is not binary"
        super().__init__(message)


class DimensionMismatchError(DatasetError):
    """Raised when matrix shapes are inconsistent."""

    def __init__(self, expected: str, actual: str):
        self.expected = expected
        self.actual = actual

        message = f"Dimension mismatch: expected {expected}, got {actual}"
        super().__init__(message)


class NoObservedEntriesError(DatasetError):
    """Raised when training is requested on a matrix with no observed entries."""

    def __init__(self, shape: tuple):
        self.shape = shape

        message = f"Matrix of shape {shape} has no observed entries"
        super().__init__(message)


class EmptyRatingsError(DatasetError):
    """Raised when a fold-in is requested without any ratings for the user."""

    def __init__(self):
        super().__init__("Cannot fold in a user with no ratings")


class EmptyTruthError(DatasetError):
    """Raised when metrics are requested over an empty truth set."""

    def __init__(self):
        super().__init__("Cannot evaluate metrics on an empty truth set")


class TooFewInstancesError(DatasetError):
    """Raised when a clustering step receives fewer rows than clusters."""

    def __init__(self, n_instances: int, required: int):
        self.n_instances = n_instances
        self.required = required

        message = f"Need at least {required} instances, got {n_instances}"
        super().__init__(message)


class StageOutOfRangeError(ConfigurationError):
    """Raised when an HMF stage index is outside 1..R-1."""

    def __init__(self, stage: int, rating_levels: int):
        self.stage = stage
        self.rating_levels = rating_levels

        message = f"Stage {stage} outside 1..{rating_levels - 1}"
        super().__init__(message)


class KTooLargeError(ConfigurationError):
    """Raised when more label groups are requested than there are labels."""

    def __init__(self, n_groups: int, n_labels: int):
        self.n_groups = n_groups
        self.n_labels = n_labels

        message = f"Cannot form {n_groups} groups from {n_labels} labels"
        super().__init__(message)


class NonDifferentiableLossError(ConfigurationError):
    """Raised when a derivative is requested for the zero-one loss."""

    def __init__(self, kind: str):
        self.kind = kind

        message = f"Loss '{kind}' has no derivative"
        super().__init__(message)


class DivergenceDomainError(NumericalError):
    """Raised when a divergence is evaluated outside its domain."""

    def __init__(self, kind: str, y: float, y_hat: float):
        self.kind = kind
        self.y = y
        self.y_hat = y_hat

        message = f"{kind} divergence undefined for y={y}, y_hat={y_hat}"
        super().__init__(message)


class SingularGramError(NumericalError):
    """Raised when a Gram matrix in the synthetic generator is singular."""

    def __init__(self, which: str, condition: float):
        self.which = which
        self.condition = condition

        message = f"Gram matrix {which} is singular (condition number {condition:.3e})"
        super().__init__(message)


class SingularSystemError(NumericalError):
    """Raised when a closed-form update faces a singular linear system."""

    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"Singular linear system: {detail}")


class EmptyModelError(NumericalError):
    """Raised when prediction is requested from a model that learned nothing."""

    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"Model is empty: {detail}")


class OptimizationDivergedError(NumericalError):
    """Raised when an objective or gradient becomes non-finite during training."""

    def __init__(self, iteration: int, value: float):
        self.iteration = iteration
        self.value = value

        message = f"Objective became non-finite ({value}) at iteration {iteration}"
        super().__init__(message)
