"""Exception hierarchy shared by every module."""


class SpdFlowError(Exception):
    """Base class; the CLI maps it to exit code 2."""


class InvalidInput(SpdFlowError, ValueError):
    pass


class NotPositiveDefinite(SpdFlowError, ValueError):
    pass


class NotCorrelation(SpdFlowError, ValueError):
    pass


class StepFailure(SpdFlowError, RuntimeError):
    pass


class NonFiniteGradient(SpdFlowError, FloatingPointError):
    pass


class NonFiniteLoss(SpdFlowError, FloatingPointError):
    pass


class MissingClass(SpdFlowError, KeyError):
    pass


class DivergedTrajectory(SpdFlowError, RuntimeError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"trajectory diverged at step {step}")


class DegenerateLabels(SpdFlowError, ValueError):
    pass


class FormatError(SpdFlowError, ValueError):
    pass


class InvalidDataset(SpdFlowError, ValueError):
    pass


class CannotSplit(SpdFlowError, ValueError):
    pass


class DegenerateChannel(SpdFlowError, ValueError):
    pass
