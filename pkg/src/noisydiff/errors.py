"""Exception hierarchy.

Three families map onto CLI exit codes: validation problems (2), numerical
failures (3) and bad input data (4).
"""


class NoisyDiffError(Exception):
    """Base class. ``stage`` is filled in by pipeline orchestrators."""

    exit_code = 1

    def __init__(self, *args, stage=None, **details):
        super().__init__(*args)
        self.stage = stage
        self.details = details

    def __str__(self):
        msg = super().__str__()
        where = [f"{k} {self.details[k]}" for k in ("row", "col") if k in self.details]
        if where:
            msg = f"{', '.join(where)}: {msg}"
        if self.stage:
            msg = f"[{self.stage}] {msg}"
        return msg


class ValidationError(NoisyDiffError, ValueError):
    exit_code = 2


class TuningOutOfRange(ValidationError):
    pass


class InsufficientBlocks(ValidationError):
    pass


class InvalidHypothesis(ValidationError):
    pass


class InvalidModel(ValidationError):
    pass


class NumericalError(NoisyDiffError, ArithmeticError):
    exit_code = 3


class NonFiniteModelOutput(NumericalError):
    pass


class SingularDiffusionMatrix(NumericalError):
    pass


class SingularNormalizer(NumericalError):
    pass


class OptimizerDidNotConverge(NumericalError):
    pass


class StudyAborted(NumericalError):
    pass


class DataError(NoisyDiffError):
    exit_code = 4


class ParseError(DataError):
    pass


class MissingDataRejected(DataError):
    pass


class DimensionMismatch(DataError):
    pass
