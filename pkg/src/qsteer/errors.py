"""Exception hierarchy shared by all qsteer modules."""


class QSteerError(Exception):
    """Base class for every error raised by qsteer."""


class DomainError(QSteerError, ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateTransitionError(QSteerError):
    """A level transition cannot be driven selectively."""

    def __init__(self, j, k, offending):
        self.j, self.k, self.offending = j, k, offending
        super().__init__(
            f"transition ({j},{k}) is degenerate: coupled pair {offending} "
            "has a gap that is an integer multiple of the driving frequency"
        )


class TruncationError(QSteerError):
    """A Galerkin truncation is too small for the requested accuracy."""

    def __init__(self, message, gap=None):
        self.gap = gap
        super().__init__(message)


class BudgetError(QSteerError):
    """A synthesized control exceeds its time or error budget."""


class NotFoundError(QSteerError):
    """A search terminated without meeting its tolerance."""

    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class StageError(QSteerError):
    """A multi-stage construction failed; ``stage`` names the culprit."""

    def __init__(self, stage, cause):
        self.stage, self.cause = stage, cause
        super().__init__(f"stage '{stage}' failed: {cause}")
