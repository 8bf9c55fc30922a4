"""The live orchestration loop: gaze in, masks out.

One orchestration context owns all mutable state; gaze sources, backend
results, and client messages enter through lock-serialized methods, so
their effects are totally ordered without finer-grained locking. The
ingest path never waits on a busy backend: segmentation requests go
through a dispatcher that runs backend calls on its own thread (or
inline, for the synchronous replay dispatcher).

Segmentation is triggered on fixation completion, not per sample, which
bounds backend load and matches the add-points-by-looking refinement
flow.
"""

from __future__ import annotations

import base64
import os
import queue
import threading
import time
from dataclasses import dataclass
from typing import Callable

from .backend import (
    Backend,
    LatestWinsDispatcher,
    SegmentRequest,
    SegmentResult,
    SynchronousDispatcher,
)
from .errors import (
    GazeSegError,
    InvalidState,
    NonMonotonicTimestamp,
    UnknownImage,
)
from .gaze import (
    DEFAULT_DISPERSION_PX,
    DEFAULT_MIN_DURATION_US,
    FixationDetector,
    Fixation,
    GazeSample,
)
from .geometry import ScreenPoint, Viewport
from .prompts import (
    DEFAULT_MIN_SPACING_PX,
    Mode,
    PromptSet,
    accumulate,
    clear as clear_prompt,
    empty_prompt,
    map_fixation,
    replace_point,
)
from . import session as sess
from .session import SessionRecorder
from .volume import (
    ImageVolume,
    MaskSlice,
    default_window,
    get_slice,
    load_volume,
    save_mask,
    window_normalize,
)

EXTERNAL_GAZE_SOURCES = ("feed", "ui-mouse")


@dataclass
class EngineConfig:
    """Tunable pipeline parameters plus serving options.

    ``gaze_source`` is one of ``simulate:<scanpath>``, ``log:<gaze log>``,
    ``feed`` (external line channel), or ``ui-mouse`` (client messages).
    """

    dispersion_px: float = DEFAULT_DISPERSION_PX
    min_duration_us: int = DEFAULT_MIN_DURATION_US
    min_spacing_px: float = DEFAULT_MIN_SPACING_PX
    tolerance: float | None = None
    backend: str = "reference"
    gaze_source: str = "ui-mouse"
    port: int = 8765
    feed_port: int | None = None
    session_out: str | None = None
    mask_dir: str | None = None
    dispatch: str = "coalesce"
    display_w: int | None = None
    display_h: int | None = None

    def __post_init__(self) -> None:
        if self.dispersion_px <= 0 or self.min_duration_us <= 0:
            raise ValueError("fixation thresholds must be positive")
        if self.min_spacing_px < 0:
            raise ValueError("min_spacing_px cannot be negative")
        if self.tolerance is not None and self.tolerance < 0:
            raise ValueError("tolerance cannot be negative")
        if self.dispatch not in ("coalesce", "sync"):
            raise ValueError(f"dispatch must be coalesce or sync, not {self.dispatch!r}")
        name = self.gaze_source.split(":", 1)[0]
        if name not in ("simulate", "log", "feed", "ui-mouse"):
            raise ValueError(f"unknown gaze source {self.gaze_source!r}")

    @classmethod
    def from_file(cls, path: str) -> "EngineConfig":
        """Parse a ``key=value`` config file; unknown keys are rejected."""
        fields = {
            "dispersion_px": float,
            "min_duration_us": int,
            "min_spacing_px": float,
            "tolerance": float,
            "backend": str,
            "gaze_source": str,
            "port": int,
            "feed_port": int,
            "session_out": str,
            "mask_dir": str,
            "dispatch": str,
            "display_w": int,
            "display_h": int,
        }
        kwargs: dict = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                key, eq, raw = text.partition("=")
                key, raw = key.strip(), raw.strip()
                if not eq or key not in fields:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                kwargs[key] = fields[key](raw)
        return cls(**kwargs)

    def pipeline_payload(self) -> dict:
        """The parameters replay needs to reproduce prompts bit-exactly."""
        return {
            "dispersion_px": self.dispersion_px,
            "min_duration_us": self.min_duration_us,
            "min_spacing_px": self.min_spacing_px,
            "tolerance": self.tolerance,
            "display_w": self.display_w,
            "display_h": self.display_h,
            "backend": self.backend,
            "dispatch": self.dispatch,
            "gaze_source": self.gaze_source,
        }


class Engine:
    """Single orchestrator for one interactive segmentation session."""

    def __init__(
        self,
        config: EngineConfig,
        backend: Backend,
        recorder: SessionRecorder | None = None,
        allow_external_gaze: bool | None = None,
        clock_us: Callable[[], int] | None = None,
    ) -> None:
        self.config = config
        self.backend = backend
        self.recorder = recorder
        if allow_external_gaze is None:
            allow_external_gaze = config.gaze_source in EXTERNAL_GAZE_SOURCES
        self.allow_external_gaze = allow_external_gaze

        self._lock = threading.RLock()
        self._t0_ns = time.monotonic_ns()
        self._clock_us = clock_us or (lambda: (time.monotonic_ns() - self._t0_ns) // 1000)

        self.volume: ImageVolume | None = None
        self.slice_index = 0
        self.mode = Mode.ALL_POINTS
        self.tracking = False
        self.viewport: Viewport | None = None
        self._window: tuple[float, float] | None = None
        self._window_explicit = False

        self.detector = FixationDetector(config.dispersion_px, config.min_duration_us)
        self._prompt: PromptSet | None = None
        self._next_request_id = 0
        self._current: tuple[SegmentRequest, SegmentResult] | None = None
        self.final_masks: dict[tuple[str, int], MaskSlice] = {}
        self.saved_paths: list[str] = []
        self._save_count = 0

        self._subscribers: list[queue.SimpleQueue] = []
        self._listeners: list[Callable[[dict], None]] = []

        if config.dispatch == "sync":
            self.dispatcher = SynchronousDispatcher(backend, self._on_result, self._on_error)
        else:
            self.dispatcher = LatestWinsDispatcher(backend, self._on_result, self._on_error)

        if self.recorder is not None:
            self._record(sess.K_CONFIG, config.pipeline_payload())

    # --- fan-out ------------------------------------------------------------

    def subscribe(self) -> queue.SimpleQueue:
        """A FIFO queue receiving every subsequent server message."""
        q: queue.SimpleQueue = queue.SimpleQueue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.SimpleQueue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def add_listener(self, fn: Callable[[dict], None]) -> None:
        """Callback fan-out for server bridges; called in message order."""
        with self._lock:
            self._listeners.append(fn)

    def remove_listener(self, fn: Callable[[dict], None]) -> None:
        with self._lock:
            if fn in self._listeners:
                self._listeners.remove(fn)

    def _broadcast(self, message: dict) -> None:
        for q in self._subscribers:
            q.put(message)
        for fn in self._listeners:
            fn(message)

    def _record(self, kind: str, payload: dict) -> None:
        if self.recorder is not None:
            self.recorder.record(kind, payload, self._clock_us())

    # --- client message state machine ----------------------------------------

    def handle_client(self, msg: dict) -> list[dict]:
        """Apply one client message; returns direct replies (errors only;
        acknowledgements travel on the broadcast stream)."""
        mtype = msg.get("type")
        handler = {
            "load_image": self._msg_load_image,
            "start_tracking": self._msg_start_tracking,
            "stop_tracking": self._msg_stop_tracking,
            "set_mode": self._msg_set_mode,
            "set_slice": self._msg_set_slice,
            "set_window": self._msg_set_window,
            "gaze_feed": self._msg_gaze_feed,
            "clear": self._msg_clear,
            "save_mask": self._msg_save_mask,
        }.get(mtype)
        if handler is None:
            return [_error(f"unknown message type {mtype!r}")]
        with self._lock:
            try:
                return handler(msg)
            except GazeSegError as exc:
                return [_error(str(exc))]

    def _msg_load_image(self, msg: dict) -> list[dict]:
        path = msg.get("path")
        if not isinstance(path, str) or not path:
            return [_error("load_image needs a path")]
        volume = load_volume(path)
        self.backend.prepare(volume, 0)

        self.volume = volume
        self.slice_index = 0
        self.viewport = self._compute_viewport(volume)
        self._window = None
        self._window_explicit = False
        self.detector.reset()
        prev_rev = self._prompt.revision if self._prompt is not None else -1
        self._prompt = empty_prompt(volume.image_id, 0, self.mode, prev_rev + 1)
        self._current = None

        self._record(sess.K_IMAGE_LOADED, {"path": path, "image_id": volume.image_id})
        self._broadcast(self._image_meta())
        return []

    def _msg_start_tracking(self, msg: dict) -> list[dict]:
        self.tracking = True
        return []

    def _msg_stop_tracking(self, msg: dict) -> list[dict]:
        # The detector keeps its candidate run: replay sees the same
        # contiguous sample sequence and must evolve identically.
        self.tracking = False
        return []

    def _msg_set_mode(self, msg: dict) -> list[dict]:
        try:
            mode = Mode(msg.get("mode"))
        except ValueError:
            return [_error(f"unknown mode {msg.get('mode')!r}")]
        if mode is self.mode:
            return []
        self.mode = mode
        if self._prompt is not None:
            # target selection restarts in the new mode
            self._prompt = empty_prompt(
                self._prompt.image_id, self._prompt.slice_index, mode,
                self._prompt.revision + 1,
            )
        self._record(sess.K_MODE_CHANGED, {"mode": mode.value})
        return []

    def _msg_set_slice(self, msg: dict) -> list[dict]:
        if self.volume is None:
            raise UnknownImage("no image loaded")
        z = msg.get("z")
        if not isinstance(z, int) or not 0 <= z < self.volume.depth:
            return [_error(f"slice {z!r} outside [0, {self.volume.depth})")]
        if z == self.slice_index:
            return []
        self.backend.prepare(self.volume, z)
        self.slice_index = z
        if not self._window_explicit:
            self._window = None
        self.detector.reset()
        self._prompt = empty_prompt(
            self.volume.image_id, z, self.mode,
            self._prompt.revision + 1 if self._prompt else 0,
        )
        self._current = None
        self._record(sess.K_SLICE_CHANGED, {"z": z})
        self._broadcast(self._image_meta())
        return []

    def _msg_set_window(self, msg: dict) -> list[dict]:
        if self.volume is None:
            raise UnknownImage("no image loaded")
        try:
            center, width = float(msg["center"]), float(msg["width"])
        except (KeyError, TypeError, ValueError):
            return [_error("set_window needs numeric center and width")]
        if width <= 0:
            return [_error("window width must be positive")]
        self._window = (center, width)
        self._window_explicit = True
        self._broadcast(self._image_meta())
        return []

    def _msg_gaze_feed(self, msg: dict) -> list[dict]:
        if not self.allow_external_gaze:
            raise InvalidState(
                f"gaze source is {self.config.gaze_source!r}, not the client channel"
            )
        try:
            sample = GazeSample(
                int(msg["t_us"]),
                ScreenPoint(float(msg["sx"]), float(msg["sy"])),
                bool(msg.get("valid", 1)),
            )
        except (KeyError, TypeError, ValueError):
            return [_error("gaze_feed needs t_us, sx, sy")]
        try:
            self.ingest(sample)
        except NonMonotonicTimestamp as exc:
            return [_error(str(exc))]
        return []

    def _msg_clear(self, msg: dict) -> list[dict]:
        if self._prompt is not None:
            self._prompt = clear_prompt(self._prompt)
        self.detector.reset()
        self._record(sess.K_CLEARED, {})
        return []

    def _msg_save_mask(self, msg: dict) -> list[dict]:
        if self._current is None:
            raise InvalidState("no mask to save")
        request, result = self._current
        path = msg.get("path")
        if not path:
            path = os.path.join(self._mask_dir(), f"mask_{self._save_count:04d}.pgm")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        save_mask(
            result.mask,
            path,
            image_id=request.image_id,
            slice_index=request.slice_index,
            revision=request.prompt.revision,
            mode=request.prompt.mode.value,
        )
        self._save_count += 1
        self.saved_paths.append(path)
        self._record(sess.K_MASK_SAVED, {"path": path})
        self._broadcast({"type": "saved_ack", "path": path})
        return []

    def _mask_dir(self) -> str:
        if self.config.mask_dir:
            return self.config.mask_dir
        if self.config.session_out:
            stem, _ = os.path.splitext(self.config.session_out)
            return stem + "_masks"
        return "masks"

    # --- gaze ingestion -------------------------------------------------------

    def ingest(self, sample: GazeSample) -> None:
        """Feed one gaze sample; never blocks on the backend.

        Samples arriving while tracking is off are dropped (and not
        recorded, so replay sees exactly the consumed stream).
        """
        with self._lock:
            if not self.tracking:
                return
            fixations = self.detector.push(sample)
            self._record(sess.K_GAZE, sess.gaze_payload(sample))
            if sample.valid:
                self._broadcast(
                    {
                        "type": "gaze_cursor",
                        "sx": sample.point.sx,
                        "sy": sample.point.sy,
                        "t_us": sample.t_us,
                    }
                )
            for fixation in fixations:
                self._handle_fixation(fixation)

    def _handle_fixation(self, fixation: Fixation) -> None:
        if self.volume is None or self.viewport is None or self._prompt is None:
            return
        mapped = map_fixation(fixation, self.viewport)
        if mapped is not None:
            self._broadcast(
                {
                    "type": "fixation",
                    "ix": mapped.ix,
                    "iy": mapped.iy,
                    "onset_us": fixation.onset_us,
                    "duration_us": fixation.duration_us,
                    "n_samples": fixation.n_samples,
                }
            )
        if self.mode is Mode.ONE_POINT:
            updated = replace_point(self._prompt, fixation, self.viewport)
        else:
            updated = accumulate(
                self._prompt, fixation, self.viewport, self.config.min_spacing_px
            )
        if updated is self._prompt or not updated.points:
            return
        self._prompt = updated
        self._record(
            sess.K_PROMPT_ISSUED,
            {
                "image_id": updated.image_id,
                "slice": updated.slice_index,
                "mode": updated.mode.value,
                "revision": updated.revision,
                "points": [[p.ix, p.iy] for p in updated.points],
            },
        )
        request = SegmentRequest(
            self._next_request_id, updated.image_id, updated.slice_index, updated
        )
        self._next_request_id += 1
        self.dispatcher.submit(request)

    # --- dispatcher callbacks ---------------------------------------------------

    def _on_result(self, request: SegmentRequest, result: SegmentResult) -> None:
        with self._lock:
            if self.volume is None or request.image_id != self.volume.image_id:
                return
            if request.slice_index != self.slice_index:
                return
            self._current = (request, result)
            self.final_masks[(request.image_id, request.slice_index)] = result.mask
            self._record(
                sess.K_MASK_PRODUCED,
                {
                    "request_id": result.request_id,
                    "version": result.mask.version,
                    "iw": result.mask.iw,
                    "ih": result.mask.ih,
                    "rle": list(result.mask.runs),
                },
            )
            self._broadcast(
                {
                    "type": "mask_update",
                    "version": result.mask.version,
                    "request_id": result.request_id,
                    "iw": result.mask.iw,
                    "ih": result.mask.ih,
                    "rle": list(result.mask.runs),
                    "score": result.score,
                }
            )

    def _on_error(self, request: SegmentRequest, exc: Exception) -> None:
        with self._lock:
            self._broadcast(_error(f"segmentation failed: {exc}"))

    # --- misc -------------------------------------------------------------------

    def _compute_viewport(self, volume: ImageVolume) -> Viewport:
        iw, ih = volume.iw, volume.ih
        dw_cfg, dh_cfg = self.config.display_w, self.config.display_h
        if dw_cfg and dh_cfg:
            scale = min(dw_cfg / iw, dh_cfg / ih)
            dw, dh = iw * scale, ih * scale
            return Viewport((dw_cfg - dw) / 2.0, (dh_cfg - dh) / 2.0, dw, dh, iw, ih)
        return Viewport(0.0, 0.0, float(iw), float(ih), iw, ih)

    def window(self) -> tuple[float, float]:
        if self._window is not None:
            return self._window
        assert self.volume is not None
        center, width = default_window(get_slice(self.volume, self.slice_index))
        self._window = (center, width)
        return self._window

    def _image_meta(self) -> dict:
        assert self.volume is not None and self.viewport is not None
        center, width = self.window()
        pixels = window_normalize(
            get_slice(self.volume, self.slice_index), center, width
        )
        return {
            "type": "image_meta",
            "image_id": self.volume.image_id,
            "path": self.volume.source_path,
            "iw": self.volume.iw,
            "ih": self.volume.ih,
            "depth": self.volume.depth,
            "slice": self.slice_index,
            "mode": self.mode.value,
            "window": {"center": center, "width": width},
            "viewport": {
                "x0": self.viewport.x0,
                "y0": self.viewport.y0,
                "dw": self.viewport.dw,
                "dh": self.viewport.dh,
            },
            "pixels": base64.b64encode(pixels.tobytes()).decode("ascii"),
        }

    def prompt(self) -> PromptSet | None:
        with self._lock:
            return self._prompt

    def current_meta(self) -> dict | None:
        """Snapshot of the image_meta message, for late-joining clients."""
        with self._lock:
            if self.volume is None:
                return None
            return self._image_meta()

    def close(self, close_backend: bool = True) -> None:
        self.dispatcher.close()
        if close_backend:
            self.backend.close()
        if self.recorder is not None:
            self.recorder.close()


def _error(message: str) -> dict:
    return {"type": "error", "message": message}
