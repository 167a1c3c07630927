"""Exception types shared across the pipeline."""


class ParameterError(ValueError):
    """Invalid argument or configuration value."""


class DataError(ValueError):
    """Input data violates a precondition (range, shape, universe)."""


class DegenerateDataError(DataError):
    """Data carries no usable information for the requested computation."""


class FormatError(ValueError):
    """Malformed file. ``path`` and ``line`` locate the problem when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NumericalError(ArithmeticError):
    """Non-finite state encountered during integration or evaluation."""

    def __init__(self, message, time=None, neuron=None):
        self.time = time
        self.neuron = neuron
        super().__init__(message)


class ConvergenceError(RuntimeError):
    """Solver hit its iteration cap without an optimality certificate."""

    def __init__(self, message, violation=None, lam=None):
        self.violation = violation
        self.lam = lam
        super().__init__(message)
