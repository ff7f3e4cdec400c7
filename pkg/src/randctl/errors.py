"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ShapeError(ValueError):
    """Array dimensions are inconsistent."""


class NumericError(ArithmeticError):
    """A numerical precondition (e.g. positive semidefiniteness) failed."""


class ProblemFileError(ValueError):
    """A problem or solution file could not be parsed.

    ``line`` is the 1-based source line the error is anchored to, when known.
    """

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        loc = []
        if path:
            loc.append(path)
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{': '.join(loc)}: {message}" if loc else message)
