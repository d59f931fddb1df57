"""Exception hierarchy.

Errors fall into three families that the CLI maps to distinct exit codes:
configuration problems, data problems and numerical failures.
"""


class PiteError(Exception):
    """Base class for all errors raised by pitetest."""


class ConfigError(PiteError):
    """Invalid run configuration or parameter values."""


class DataError(PiteError):
    """Input data violates the dataset contract."""


class NumericalError(PiteError):
    """A model fit or calculation could not be carried out."""


class MissingValue(DataError):
    def __init__(self, row, col):
        self.row = row
        self.col = col
        super().__init__(f"missing or non-finite value at row {row}, column {col!r}")


class NonBinaryTreatment(DataError):
    def __init__(self, row, value=None):
        self.row = row
        self.value = value
        super().__init__(f"treatment at row {row} is {value!r}; expected 0 or 1")


class NonBinaryCovariate(DataError):
    def __init__(self, col):
        self.col = col
        super().__init__(f"covariate {col!r} declared binary but has values other than 0/1")


class DegenerateArm(DataError):
    def __init__(self, arm, size, required=2):
        self.arm = arm
        self.size = size
        self.required = required
        super().__init__(f"{arm} arm has {size} members; at least {required} required")


class EmptyCovariates(DataError):
    def __init__(self):
        super().__init__("at least one covariate column is required")


class DimensionMismatch(DataError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"expected {expected} covariates, got {got}")


class RankDeficient(NumericalError):
    def __init__(self, rank, columns, rows):
        self.rank = rank
        self.columns = columns
        self.rows = rows
        super().__init__(
            f"design matrix with {rows} rows and {columns} columns has rank {rank}"
        )


class TooFewValues(NumericalError):
    def __init__(self, n):
        super().__init__(f"need at least 2 values, got {n}")


class ZeroPooledSD(NumericalError):
    def __init__(self):
        super().__init__("pooled outcome SD is zero (outcome constant in both arms)")


class CalibrationFailure(NumericalError):
    pass


class PermutationFitFailure(NumericalError):
    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"fit failed in permutation {index}: {cause}")


class TooLarge(ConfigError):
    def __init__(self, count, limit):
        super().__init__(f"{count} assignments exceed the enumeration limit {limit}")


class CellFailure(NumericalError):
    def __init__(self, index, label, replication, cause):
        self.index = index
        self.replication = replication
        self.cause = cause
        super().__init__(f"cell {index} ({label or 'unlabelled'}), replication {replication}: {cause}")
