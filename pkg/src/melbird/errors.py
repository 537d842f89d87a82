"""Exception and warning hierarchy shared across the pipeline.

Two error families matter to the CLI: ``DataError`` (bad or inconsistent
inputs, exit code 2) and ``NumericError`` (divergence or non-finite values,
exit code 3). Everything else is a programming error and propagates.
"""


class MelbirdError(Exception):
    """Base class for all package errors."""


class DataError(MelbirdError):
    """Input data is missing, malformed, or inconsistent."""


class NumericError(MelbirdError):
    """A numeric computation produced an unusable result."""


# audio decoding / segmentation
class UnsupportedFormat(DataError):
    """Audio file uses a codec or layout the decoder does not handle."""


class CorruptHeader(DataError):
    """Audio container headers are truncated or self-inconsistent."""


class EmptyAudio(DataError):
    """Audio holds zero samples."""


# spectrogram pipeline
class SegmentTooShort(DataError):
    """Segment is shorter than one analysis frame."""


class DegenerateBand(DataError):
    """A mel filter ended up with no spectral support."""


# tensor core
class ShapeMismatch(MelbirdError):
    """Operands have incompatible shapes."""


class SizeMismatch(ShapeMismatch):
    """An input's size does not match the configured geometry."""


class NonScalarLoss(MelbirdError):
    """backward() was called on a non-scalar tensor."""


class TapeConsumed(MelbirdError):
    """backward() was called twice on the same tape."""


class NonFiniteValue(NumericError):
    """An operation produced NaN or Inf."""


# dataset / training
class EmptyDataset(DataError):
    """No usable audio files were found."""


class DataEmpty(DataError):
    """A training split holds no examples."""


class DivergedLoss(NumericError):
    """Training loss became NaN or Inf."""


class ConfigError(DataError):
    """Configuration is invalid or inconsistent with the data."""


# warnings
class MelbirdWarning(UserWarning):
    """Base class for package warnings."""


class AllZeroInput(MelbirdWarning):
    """dB conversion received an all-zero power matrix."""


class UnreadableFile(MelbirdWarning):
    """A file in the dataset tree could not be decoded and was skipped."""


class ClassTooSmall(MelbirdWarning):
    """A class has too few clips to contribute to the validation split."""


class EmptyClass(MelbirdWarning):
    """A class folder holds no audio files."""
