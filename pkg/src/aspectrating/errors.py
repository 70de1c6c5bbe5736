from __future__ import annotations


class AspectRatingError(Exception):
    """Base error; `category` and `exit_code` drive the CLI's reporting."""

    category = "error"
    exit_code = 1


class InputFileError(AspectRatingError):
    category = "missing-file"
    exit_code = 3


class SchemaMismatchError(AspectRatingError):
    category = "schema-mismatch"
    exit_code = 4


class DataError(AspectRatingError):
    category = "data"
    exit_code = 5


class MetricError(DataError):
    category = "metric"


class StateError(AspectRatingError):
    category = "state"
    exit_code = 6
