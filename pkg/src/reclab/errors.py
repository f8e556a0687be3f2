"""Exception types raised across the package."""


class RecLabError(Exception):
    """Base class for all package errors."""


class MissingColumn(RecLabError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"missing column: {self.name!r}"


class MalformedRow(RecLabError, ValueError):
    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class MalformedRows(RecLabError, ValueError):
    """Too many rows failed to parse; ``errors`` holds every MalformedRow."""

    def __init__(self, errors, n_rows):
        self.errors = list(errors)
        self.n_rows = n_rows
        super().__init__(
            f"{len(self.errors)} of {n_rows} rows malformed; first: {self.errors[0]}"
        )


class DegenerateSplit(RecLabError, ValueError):
    pass


class InvalidConfig(RecLabError, ValueError):
    pass


class UnknownUser(RecLabError, KeyError):
    pass


class OutOfOrderEvent(RecLabError, ValueError):
    pass


class InsufficientData(RecLabError, ValueError):
    pass


class DimensionMismatch(RecLabError, ValueError):
    pass


class TripTooShort(RecLabError, ValueError):
    pass


class UnknownCityId(RecLabError, ValueError):
    pass


class AllPadInput(RecLabError, ValueError):
    pass


class ShapeMismatch(RecLabError, ValueError):
    pass


class InvalidTarget(RecLabError, ValueError):
    pass


class NonSimplexInput(RecLabError, ValueError):
    pass


class BatchSizeMismatch(RecLabError, ValueError):
    pass


class Divergence(RecLabError, RuntimeError):
    def __init__(self, epoch, last_state=None):
        super().__init__(f"non-finite loss in epoch {epoch}")
        self.epoch = epoch
        self.last_state = last_state


class EmptyRanking(RecLabError, ValueError):
    pass


class LeakageError(RecLabError, RuntimeError):
    """The recommender consumed the hidden final city."""


class TooFewPoints(RecLabError, ValueError):
    pass


class ConfigError(RecLabError, ValueError):
    pass


class HashMismatch(RecLabError, ValueError):
    pass
