"""Exception hierarchy shared by all tidaldrag modules."""


class TidalDragError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(TidalDragError, ValueError):
    """Input violates a documented invariant."""


class InvalidCt(ValidationError):
    pass


class BlockedCell(ValidationError):
    """Effective thrust coefficient of the drag cross-section reaches 1."""


class NoSolution(TidalDragError):
    """Base for problems without an admissible solution."""


class NoPhysicalRoot(NoSolution):
    pass


class NoRealRoot(NoSolution):
    pass


class DegenerateWake(NoSolution):
    pass


class NonMonotoneResult(ValidationError):
    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class ResolutionError(ValidationError):
    pass


class PointOutsideDomain(ValidationError):
    pass


class SolverError(TidalDragError):
    """Base for failures of the shallow-water time stepper."""


class DryCell(SolverError):
    def __init__(self, cell):
        super().__init__(f"non-positive depth in cell {cell}")
        self.cell = cell


class NonFinite(SolverError):
    pass


class NotConverged(SolverError):
    """Steady state not reached; carries the last state and its history."""

    def __init__(self, message, state=None, history=None):
        super().__init__(message)
        self.state = state
        self.history = history or []
