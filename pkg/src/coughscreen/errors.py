"""Exception types raised across the package.

Everything derives from CoughScreenError so callers can catch one base; most
classes also subclass ValueError so generic numeric code keeps working.
"""


class CoughScreenError(Exception):
    """Base class for all package errors."""


# -- audio --------------------------------------------------------------

class MalformedWav(CoughScreenError, ValueError):
    """RIFF/WAVE container is structurally broken."""


class UnsupportedEncoding(CoughScreenError, ValueError):
    """WAV encoding we do not decode (compressed codecs, odd bit depths)."""


class EmptyAudio(CoughScreenError, ValueError):
    """Audio payload has zero frames."""


# -- featurization ------------------------------------------------------

class NegativeFrequency(CoughScreenError, ValueError):
    pass


class ClipTooShort(CoughScreenError, ValueError):
    """Clip shorter than one analysis frame."""


class InvalidProfile(CoughScreenError, ValueError):
    """Feature profile inconsistent with itself or the sample rate."""


class DimensionMismatch(CoughScreenError, ValueError):
    pass


# -- neural network core ------------------------------------------------

class ShapeMismatch(CoughScreenError, ValueError):
    pass


class InvalidRate(CoughScreenError, ValueError):
    """Dropout rate outside [0, 1)."""


class LabelOutOfRange(CoughScreenError, ValueError):
    pass


class NonFiniteGradient(CoughScreenError, FloatingPointError):
    pass


class InputTooSmall(CoughScreenError, ValueError):
    """Model input too small for the layer stack."""


# -- model persistence --------------------------------------------------

class CorruptModelFile(CoughScreenError, ValueError):
    """Bad magic, truncation, or checksum failure."""


class VersionMismatch(CoughScreenError, ValueError):
    pass


# -- datasets -----------------------------------------------------------

class ParseError(CoughScreenError, ValueError):
    """Manifest CSV malformed; message carries row/column diagnostics."""


class UnknownLabel(CoughScreenError, ValueError):
    pass


class DuplicatePath(CoughScreenError, ValueError):
    pass


class ClassTooSmall(CoughScreenError, ValueError):
    """A class has too few entries to split."""


# -- training -----------------------------------------------------------

class NonFiniteLoss(CoughScreenError, FloatingPointError):
    """Loss became NaN/inf; message carries epoch/batch location."""


class EmptySplit(CoughScreenError, ValueError):
    pass


# -- metrics ------------------------------------------------------------

class EmptyMatrix(CoughScreenError, ValueError):
    pass


class EmptyRow(CoughScreenError, ValueError):
    pass


# -- cli ----------------------------------------------------------------

class TaskMismatch(CoughScreenError, ValueError):
    """Model class count does not match the manifest task."""
