"""Exception types raised across the package."""


class InputError(ValueError):
    """Invalid argument, shape or configuration value."""


class DegenerateFactorError(InputError):
    """The landmark Gram matrix has numerical rank zero."""


class NumericalError(ArithmeticError):
    """A linear system could not be solved to the required accuracy."""


class CSVParseError(InputError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")
