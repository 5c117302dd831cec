class ModelError(ValueError):
    """Malformed instance text. ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        elif column is not None:
            where = f" (column {column})"
        super().__init__(message + where)
        self.message = message


class ExprSyntaxError(ModelError):
    pass


class UnknownIdentifierError(ExprSyntaxError):
    pass


class EqualityUnsupportedError(ModelError):
    pass


class NonConvexError(ValueError):
    """A solver was handed a body whose convexity cannot be certified."""


class WeightsError(ValueError):
    """A classifier weights file is missing, corrupt or inconsistent."""
