"""Exception types shared across the package."""


class FormatError(ValueError):
    """A file does not match the expected container layout."""


class DivergenceError(FloatingPointError):
    """An iterative procedure produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
