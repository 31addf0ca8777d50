"""Exception hierarchy used across the package."""


class ChlsimError(Exception):
    """Base class for all package errors."""


class RangeError(ChlsimError, ValueError):
    """A wavelength range selects too few grid points."""


class ExtrapolationError(ChlsimError, ValueError):
    """Interpolation requested outside the sampled wavelength span."""


class CoverageError(ChlsimError, ValueError):
    """A band's weighting support contains no usable spectrometer samples."""


class ConfigurationError(ChlsimError, ValueError):
    """A band or sensor is missing something its weighting approach needs."""


class SensorFileError(ChlsimError, ValueError):
    """Malformed sensor definition file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvariantError(ChlsimError, ValueError):
    """A domain object violates one of its declared invariants."""

    def __init__(self, rule, message):
        self.rule = rule
        super().__init__(f"[{rule}] {message}")


class ParseError(ChlsimError, ValueError):
    """Malformed CSV input; carries the offending location."""

    def __init__(self, message, path=None, row=None, column=None):
        self.path, self.row, self.column = path, row, column
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ConvergenceError(ChlsimError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, iterations, objective):
        self.iterations = iterations
        self.objective = objective
        super().__init__(f"{message} (iterations={iterations}, objective={objective:.6g})")


class UndefinedMetricError(ChlsimError, ValueError):
    """Metric is undefined for the given input (e.g. zero target variance)."""


class UndefinedRatioError(ChlsimError, ZeroDivisionError):
    """Band ratio denominator is zero."""


class TuningError(ChlsimError, RuntimeError):
    """Every grid point failed during hyperparameter search."""
