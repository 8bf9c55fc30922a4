"""gazeseg: real-time gaze-driven point-prompt segmentation.

A library plus a small engine that turns a stream of eye-gaze (or
gaze-surrogate) samples into point prompts for a promptable segmentation
backend, publishes live mask updates, and records sessions for bit-exact
replay and dataset export.
"""

from .backend import (
    Backend,
    LatestWinsDispatcher,
    ReferenceBackend,
    SegmentRequest,
    SegmentResult,
    SynchronousDispatcher,
    make_backend,
    region_grow,
)
from .engine import Engine, EngineConfig
from .errors import (
    BackendUnavailable,
    BadMagic,
    CorruptLog,
    DegenerateCalibration,
    DimensionMismatch,
    EmptyPrompt,
    GazeSegError,
    InvalidState,
    IoFailure,
    LengthMismatch,
    ModeMismatch,
    NonMonotonicTimestamp,
    NoPromptPoints,
    NotPrepared,
    OutsideViewport,
    SliceOutOfRange,
    TimestampRegression,
    TruncatedData,
    UnknownImage,
)
from .gaze import (
    FixationDetector,
    Fixation,
    GazeSample,
    ScanpathSpec,
    ScanpathTarget,
    detect_fixations_batch,
    read_gaze_log,
    read_scanpath,
    simulate_scanpath,
    write_gaze_log,
)
from .geometry import (
    CalibrationModel,
    ImagePoint,
    ScreenPoint,
    Viewport,
    apply_calibration,
    fit_calibration,
    image_to_screen,
    load_calibration,
    read_calibration_points,
    save_calibration,
    screen_to_image,
)
from .prompts import (
    Mode,
    PromptPoint,
    PromptSet,
    accumulate,
    build_prompt,
    clear,
    empty_prompt,
)
from .protocol import RemoteBackend, WorkerProcess, run_transcript
from .scripted import run_scripted_session
from .session import SessionEvent, SessionRecorder, export_dataset, read_session, replay
from .volume import (
    ImageVolume,
    MaskSlice,
    default_window,
    get_slice,
    load_mask_pgm,
    load_volume,
    make_volume,
    read_meta,
    rle_decode,
    rle_encode,
    save_mask,
    window_normalize,
    write_volume,
)

__version__ = "0.1.0"
