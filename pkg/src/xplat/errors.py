"""Exception types shared across the toolkit."""


class CapacityError(RuntimeError):
    """Raised when a simulation or estimator would exceed its qubit cap."""


class UndefinedValueError(ValueError):
    """Raised when a quantity is mathematically undefined for the inputs.

    The offending raw values are kept on ``values`` for the caller.
    """

    def __init__(self, message, **values):
        super().__init__(message)
        self.values = values


class DatasetError(ValueError):
    """A measurement dataset violates its schema or invariants.

    ``record`` holds the zero-based index of the offending record, if any.
    """

    def __init__(self, message, record=None):
        if record is not None:
            message = f"record {record}: {message}"
        super().__init__(message)
        self.record = record
