"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A precondition on an argument was violated."""


class ResolutionError(InvalidArgument):
    """The time grid is too coarse for the requested spectral content."""


class InsufficientStatistics(RuntimeError):
    """A data sample holds too few counts for a meaningful fit."""

    def __init__(self, counts, minimum):
        super().__init__(f"sample has {counts} counts, need at least {minimum}")
        self.counts = counts
        self.minimum = minimum
