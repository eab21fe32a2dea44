"""Exception types shared across the package."""


class ParamContError(Exception):
    pass


class DegenerateSecant(ParamContError):
    """Two path points are too close to define a direction."""


class NumericalDivergence(ParamContError):
    """A loss, gradient or parameter became NaN or infinite."""


class FormatError(ParamContError):
    """Malformed IDX file."""


class SingularSystem(ParamContError):
    """The augmented Newton matrix could not be solved."""


class CorrectorFailed(ParamContError):
    """Corrector did not converge; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics


class _PartialTraceError(ParamContError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ContinuationStalled(_PartialTraceError):
    """Path following could not advance. ``step`` is the index that failed."""

    def __init__(self, message, trace=None, step=None):
        super().__init__(message, trace)
        self.step = step


class MaxStepsExceeded(_PartialTraceError):
    """Continuation step limit reached before the target lambda."""
