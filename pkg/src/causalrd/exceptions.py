class CausalRDError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(CausalRDError):
    """Invalid schema configuration."""


class DataFormatError(CausalRDError):
    """Malformed input table.

    Carries the offending (1-based) file row and column name when known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NotNormalizedError(CausalRDError):
    pass


class SelectionError(CausalRDError):
    """Covariate selection produced nothing usable."""


class FitError(CausalRDError):
    pass


class StageError(CausalRDError):
    """Pipeline failure tagged with the stage where it happened."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
