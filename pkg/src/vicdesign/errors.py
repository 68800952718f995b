"""Exception types raised across the toolkit."""


class VicDesignError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(VicDesignError, ValueError):
    """Input data violates a documented invariant."""


class ParseError(VicDesignError, ValueError):
    """A demonstration file could not be parsed.

    Carries the offending file and 1-based line number.
    """

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class AlignmentError(VicDesignError, ValueError):
    """Demonstrations cannot be aligned onto a common grid."""


class FitError(VicDesignError, RuntimeError):
    """Model fitting diverged or failed numerically."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class DegenerateProfileError(VicDesignError, ValueError):
    """Compliance extremes coincide; the stiffness scaling is ill-posed."""


class SearchError(VicDesignError, RuntimeError):
    """The solution search ended without a single feasible candidate."""


class SimulationDivergenceError(VicDesignError, RuntimeError):
    """Closed-loop state became non-finite."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step
