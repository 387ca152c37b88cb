"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`Se3KoopmanError`. Numerical failures additionally derive from
:class:`NumericalError` so the CLI can map them to a single exit code.
"""


class Se3KoopmanError(Exception):
    pass


class NumericalError(Se3KoopmanError):
    pass


class ConfigError(Se3KoopmanError, ValueError):
    pass


class NonSkewInputError(Se3KoopmanError, ValueError):
    pass


class SingularProjectionError(NumericalError):
    pass


class IntegrationDivergedError(NumericalError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class ReconstructionFailedError(NumericalError):
    pass


class EmptyDatasetError(Se3KoopmanError, ValueError):
    pass


class DegenerateDataError(NumericalError):
    pass


class PredictionDivergedError(NumericalError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class ZeroReferenceError(NumericalError):
    pass


class ModelFileError(Se3KoopmanError):
    pass


class FormatVersionMismatchError(ModelFileError):
    pass


class CorruptFileError(ModelFileError):
    pass


class NotPositiveDefiniteError(NumericalError):
    pass


class DimensionMismatchError(Se3KoopmanError, ValueError):
    pass


class QpInfeasibleError(NumericalError):
    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index
