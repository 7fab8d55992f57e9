"""Exception hierarchy shared across the package."""


class KneedetError(Exception):
    """Base class for all package errors."""


class InvalidInputError(KneedetError, ValueError):
    pass


class DegenerateGeometryError(KneedetError, ValueError):
    pass


class ParseError(KneedetError, ValueError):
    """Malformed input text or bytes; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class WeightsError(KneedetError, ValueError):
    pass


class TruncatedWeightsError(WeightsError):
    pass


class TrailingBytesError(WeightsError):
    pass


class WeightsVersionError(WeightsError):
    pass


class ShapeError(KneedetError, ValueError):
    pass


class NumericFaultError(KneedetError, ArithmeticError):
    pass


class MissingFileError(KneedetError, FileNotFoundError):
    pass
