"""Exception types shared across the package."""


class G2SError(Exception):
    """Base class for all package errors."""


class ShapeError(G2SError, ValueError):
    pass


class DegenerateSliceError(G2SError, ValueError):
    """A softmax slice had every entry masked out."""


class NumericError(G2SError, FloatingPointError):
    pass


class ConfigError(G2SError, ValueError):
    pass


class ParseError(G2SError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(G2SError, ValueError):
    def __init__(self, example_id: str, field: str, message: str):
        self.example_id = example_id
        self.field = field
        super().__init__(f"example {example_id!r}, field {field!r}: {message}")


class FormatError(G2SError, ValueError):
    pass


class IntegrityError(G2SError, ValueError):
    """Checkpoint container failed magic or checksum validation."""


class EmptyInputError(G2SError, ValueError):
    pass


class MetricError(G2SError, ValueError):
    pass
