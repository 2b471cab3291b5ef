"""Exception and warning types raised by the package."""


class SDIDError(Exception):
    """Base class for all package errors."""


class PanelError(SDIDError, ValueError):
    """The input panel violates a structural requirement."""


class ParseError(PanelError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class MissingCell(PanelError):
    def __init__(self, unit, time):
        self.unit = unit
        self.time = time
        super().__init__(f"missing observation for unit {unit!r} at time {time}")


class DuplicateCell(ParseError):
    pass


class TimeGap(PanelError):
    pass


class NonAbsorbingTreatment(PanelError):
    def __init__(self, unit):
        self.unit = unit
        super().__init__(f"treatment switches off for unit {unit!r}")


class TreatedFromFirstPeriod(PanelError):
    def __init__(self, unit):
        self.unit = unit
        super().__init__(f"unit {unit!r} is treated in the first period (no pre-treatment period)")


class NoControls(PanelError):
    pass


class NoTreated(PanelError):
    pass


class UnknownCohort(SDIDError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class HorizonOutOfRange(SDIDError, ValueError):
    pass


class SolverError(SDIDError):
    """Weight fitting could not produce a usable solution."""


class DegenerateProblem(SolverError):
    pass


class MaxIterationsWarning(RuntimeWarning):
    """The simplex solver stopped at the iteration cap before reaching tolerance."""


class InferenceError(SDIDError):
    pass


class TooManyFailedDraws(InferenceError):
    pass


class DegeneratePanel(InferenceError):
    pass


class InsufficientControls(InferenceError):
    pass


class InvalidSpec(SDIDError, ValueError):
    pass
