"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ParameterError(ValueError):
    """An argument is outside its allowed range."""


class DataError(Exception):
    """A dataset file or tree is malformed or incomplete."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or gradient."""
