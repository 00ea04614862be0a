"""Exception hierarchy.

Everything raised on purpose by this package derives from ``EegReconError``.
``MissingPrerequisite`` is kept apart because the CLI maps it to its own exit
code.
"""


class EegReconError(Exception):
    """Base class for all domain errors."""


class ValidationError(EegReconError, ValueError):
    """Bad input: shape, range or configuration problems."""


class MissingPrerequisite(EegReconError):
    """A required artifact (checkpoint, dataset, fixture) is not on disk."""

    def __init__(self, path, what=""):
        self.path = str(path)
        msg = f"missing prerequisite: {self.path}"
        if what:
            msg += f" ({what})"
        super().__init__(msg)


# dataset_io
class MissingManifest(MissingPrerequisite):
    pass


class ShapeMismatch(ValidationError):
    pass


class UnknownTrialId(ValidationError):
    pass


class InvalidChannelIndex(ValidationError):
    pass


class RatioSumError(ValidationError):
    pass


# montage
class InfeasibleCoverage(ValidationError):
    pass


class IdentityNotAllowed(ValidationError):
    pass


class UnknownLabel(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


# semantic decoder
class DivergenceError(EegReconError):
    pass


class EmptySplit(ValidationError):
    pass


class ChannelMismatch(ValidationError):
    pass


class BadWays(ValidationError):
    pass


class BadK(ValidationError):
    pass


# diffusion engine
class BadDimensions(ValidationError):
    pass


class TimestepOutOfRange(ValidationError):
    pass


class FrozenWeightMutation(EegReconError):
    pass


class NotTrained(MissingPrerequisite):
    def __init__(self, what="engine has no trained adapter"):
        EegReconError.__init__(self, what)
        self.path = ""


class BadStrength(ValidationError):
    pass


# boosting
class DescriberError(EegReconError):
    pass


class RemoteTimeout(DescriberError):
    pass


class RemoteMalformedResponse(DescriberError):
    pass


class DescriberUnavailable(DescriberError):
    pass


class EmptyDescription(ValidationError):
    pass


# metrics
class TooFewImages(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class NonPSDProduct(ValidationError):
    pass


class ZeroEmbedding(ValidationError):
    pass


# ablation
class EmptyRegion(ValidationError):
    pass


class CountMismatch(ValidationError):
    pass


# study stats
class EmptyInput(ValidationError):
    pass


class TooFewTrials(ValidationError):
    pass


# cli
class ConfigValidationError(ValidationError):
    pass
