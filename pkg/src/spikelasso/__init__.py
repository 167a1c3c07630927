"""Sparse effective-connectivity inference for simulated spiking networks."""

from .errors import (ConvergenceError, DataError, DegenerateDataError, FormatError,
                     NumericalError, ParameterError)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DataError", "DegenerateDataError", "FormatError",
    "NumericalError", "ParameterError",
]
