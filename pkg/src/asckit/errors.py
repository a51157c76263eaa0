"""Exception types shared across the toolkit."""


class AscKitError(Exception):
    """Base class for all toolkit errors."""


# audio ingestion
class MalformedHeader(AscKitError):
    """The file is not a parseable RIFF/WAVE container."""


class UnsupportedEncoding(AscKitError):
    """The WAV encoding is not 16-bit PCM or 32-bit IEEE float."""


class EmptyAudio(AscKitError):
    """The audio payload contains zero samples."""


class ClipTooShort(AscKitError):
    """Clip is shorter than the requested analysis window/segment."""


# spectral front-end
class InvalidBandRange(AscKitError):
    """Filterbank frequency range is empty or exceeds Nyquist."""


class NyquistExceeded(AscKitError):
    """A requested band center lies above the Nyquist frequency."""


class TooFewFrames(AscKitError):
    """Feature sequence has fewer frames than the regression window."""


class ShapeMismatch(AscKitError):
    """Operands have incompatible shapes."""


# augmentation
class CropWiderThanInput(AscKitError):
    """Requested crop width exceeds the time axis length."""


class MaskLongerThanAxis(AscKitError):
    """Requested mask run exceeds the masked axis length."""


class BatchTooSmall(AscKitError):
    """The operation needs at least two samples in the batch."""


# model zoo
class ConfigMismatch(AscKitError):
    """Architecture configuration is internally inconsistent."""


class UnknownVariant(AscKitError):
    """Requested network variant name is not defined."""


class WeightsNotLoaded(AscKitError):
    """A weight file does not cover the network's parameters."""


# training
class NonPositivePrediction(AscKitError):
    """Predicted probabilities must be strictly positive for the KL loss."""


class EpochOutOfRange(AscKitError):
    """Epoch index outside the configured schedule."""


# evaluation
class LengthMismatch(AscKitError):
    """Aligned arrays (predictions, labels, devices) differ in length."""


# dataset generation / CLI
class IOFailure(AscKitError):
    """Reading or writing a dataset artifact failed."""


class ConfigError(AscKitError):
    """Run configuration could not be parsed or contains unknown keys."""
