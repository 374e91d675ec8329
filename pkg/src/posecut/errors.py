"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`PosecutError`.
The CLI maps the two families below onto exit codes 2 and 3.
"""


class PosecutError(Exception):
    pass


# -- format / structure family (exit code 2) ---------------------------------

class FormatError(PosecutError):
    pass


class ParseError(FormatError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    """Well-formed record carrying an invalid value (e.g. a non-SPD information matrix)."""


class StructureError(FormatError):
    """Edge insertion would break a pose-graph invariant."""


# -- numerical / feasibility family (exit code 3) ----------------------------

class NumericalError(PosecutError):
    pass


class NotConnectedError(NumericalError):
    """No odometry chain joins the requested nodes."""


class FeasibilityError(NumericalError):
    """Edge labeling violates a cycle inequality."""


class CapacityError(NumericalError):
    pass


class AlignmentError(NumericalError):
    pass


class GenerationError(NumericalError):
    pass


class NumericalFailure(NumericalError):
    """Optimizer diverged; ``estimate`` holds the last finite iterate."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
