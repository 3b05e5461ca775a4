"""Exception hierarchy shared by every flatrack module."""


class FlatrackError(Exception):
    """Base class for all flatrack errors."""


class SingularMatrix(FlatrackError):
    pass


class NotPositiveDefinite(FlatrackError):
    pass


class DegenerateInput(FlatrackError):
    pass


class SingularPrediction(FlatrackError):
    """The flat predictor's input gain CS is not invertible for this horizon."""


class SingularConfiguration(FlatrackError):
    """A plant left the domain where its flat transform is defined."""


class SingularJacobian(FlatrackError):
    """The prediction Jacobian with respect to the input is not invertible."""


class PredictionDiverged(FlatrackError):
    pass


class StageEvaluationFailed(FlatrackError):
    def __init__(self, stage, cause):
        super().__init__(f"rk4 stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


class SimulationAborted(FlatrackError):
    def __init__(self, step, cause):
        super().__init__(f"simulation aborted at step {step}: {cause}")
        self.step = step
        self.cause = cause


class NonMonotoneVerdict(FlatrackError):
    pass


class SamplingDegenerate(FlatrackError):
    pass


class ConfigError(FlatrackError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
