"""Exception types, grouped so the CLI can report a category and exit code."""


class NlnError(Exception):
    exit_code = 1
    category = "error"


class DimensionError(NlnError, ValueError):
    category = "dimension"


class DomainError(NlnError, ValueError):
    category = "domain"


class PreconditionError(NlnError, ValueError):
    category = "precondition"


class SchemaError(NlnError, ValueError):
    exit_code = 3
    category = "schema"


class DataError(NlnError, ValueError):
    exit_code = 3
    category = "data"


class CapacityError(NlnError, ValueError):
    exit_code = 4
    category = "capacity"


class NotDiscretizedError(NlnError, ValueError):
    category = "not-discretized"


class TrainingError(NlnError, RuntimeError):
    exit_code = 5
    category = "training"
