"""Exception hierarchy shared by every module.

Each error carries an exit code and a detail string so the CLI can turn it
into ``{"error": ..., "detail": ...}`` without knowing where it came from.
"""


class BAPNError(Exception):
    """Base class. ``exit_code`` 2 marks user errors, 1 internal ones."""

    exit_code = 1

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail

    @property
    def name(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        return {"error": self.name, "detail": self.detail}


class UserError(BAPNError):
    exit_code = 2


# dsp-core
class SilentInput(UserError):
    """Clip RMS is at or below the silence floor."""


class BadConfig(UserError):
    """A configuration value or an STFT parameter set is invalid."""


class ShapeMismatch(BAPNError):
    pass


class BadAudioFormat(UserError):
    pass


# scene-synth
class BadOrientation(UserError):
    pass


# pseudo-label
class EmptyStack(UserError):
    pass


class UnknownClass(UserError):
    pass


# autodiff-core
class DegenerateBatch(BAPNError):
    pass


class LabelOutOfRange(BAPNError):
    pass


class MissingGrad(BAPNError):
    pass


class NonFiniteValue(BAPNError):
    pass


class CheckpointCorrupt(UserError):
    pass


# metrics
class NonpositiveGroundTruth(BAPNError):
    pass


# train-eval
class MissingTarget(BAPNError):
    pass


class DataMissing(UserError):
    pass


class DivergedLoss(BAPNError):
    pass


# cli
class IoFailure(UserError):
    pass
