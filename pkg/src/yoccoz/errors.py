"""Exception hierarchy shared by every module of the package."""


class YoccozError(Exception):
    """Base class; the CLI maps any subclass to exit code 2."""


class PrecisionExhausted(YoccozError):
    pass


class InvariantViolation(YoccozError):
    pass


class GaugeInvalid(YoccozError):
    pass


class RootBracketFailure(YoccozError):
    pass


class TuneDepthUnreachable(YoccozError):
    pass


class DegenerateCell(YoccozError):
    pass


class IndexMismatch(YoccozError):
    pass


class PoleProximity(YoccozError):
    pass


class SmallK(YoccozError):
    pass


class NodeMismatch(YoccozError):
    pass


class OutsideDomain(YoccozError):
    pass


class ResolutionInsufficient(YoccozError):
    pass


class SeamProximity(YoccozError):
    pass


class StepUnderflow(YoccozError):
    pass


class BudgetTooSmall(YoccozError):
    pass


class InsufficientTail(YoccozError):
    pass


class ManifestInvalid(YoccozError):
    pass


class StageFailure(YoccozError):
    def __init__(self, stage, error):
        super().__init__(f"stage {stage!r} failed: {error}")
        self.stage = stage
        self.error = error
