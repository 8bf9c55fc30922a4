"""Exception types shared across the package."""


class GazeSegError(Exception):
    """Base class for all package errors."""


# geometry

class DegenerateCalibration(GazeSegError):
    """Calibration fit is underdetermined (too few or collinear points)."""


class OutsideViewport(GazeSegError):
    """Screen point does not land on the displayed image."""


# gaze stream

class NonMonotonicTimestamp(GazeSegError):
    """Sample timestamp did not strictly increase within a stream."""


# prompt builder

class NoPromptPoints(GazeSegError):
    """No fixation survived mapping into the image."""


class ModeMismatch(GazeSegError):
    """Operation requires a different prompt mode."""


# image volume

class BadMagic(GazeSegError):
    """Volume file does not start with the expected magic token."""


class DimensionMismatch(GazeSegError):
    """Volume header is malformed or inconsistent with the payload."""


class TruncatedData(GazeSegError):
    """Volume payload is shorter than the header promises."""


class SliceOutOfRange(GazeSegError):
    """Requested slice index is outside [0, depth)."""


class LengthMismatch(GazeSegError):
    """Run lengths do not sum to the mask size."""


class IoFailure(GazeSegError):
    """Underlying file operation failed."""


# segmentation backend

class BackendUnavailable(GazeSegError):
    """Backend process or channel is unusable."""


class NotPrepared(GazeSegError):
    """segment() called before prepare() for this image/slice."""


class EmptyPrompt(GazeSegError):
    """Segmentation requested with no prompt points."""


# session

class TimestampRegression(GazeSegError):
    """Recorded event timestamp went backwards."""


class CorruptLog(GazeSegError):
    """Session log failed to parse or violates its invariants."""


# engine

class InvalidState(GazeSegError):
    """Client message is not valid in the current engine state."""


class UnknownImage(GazeSegError):
    """Message refers to an image that is not loaded."""
