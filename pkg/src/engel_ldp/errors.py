class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ResourceError(RuntimeError):
    """A configured budget (states, random bits) would be exceeded."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class UnsupportedMethodError(ValueError):
    """The requested computation is outside what the chosen method can certify."""


class FitError(ValueError):
    pass


class BinningError(ValueError):
    pass
