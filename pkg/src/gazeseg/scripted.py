"""Headless scripted sessions: the hardware-free end-to-end path.

Runs the full engine pipeline (load, track, fixate, prompt, segment,
save) against a synthetic scanpath with a synchronous dispatcher and a
virtual clock, recording a session log along the way. Two runs with the
same inputs produce identical logs and identical mask bytes.
"""

from __future__ import annotations

import itertools
import os

from .backend import Backend, ReferenceBackend
from .engine import Engine, EngineConfig
from .gaze import ScanpathSpec, simulate_scanpath
from .prompts import Mode
from .session import SessionRecorder


def run_scripted_session(
    scanpath: ScanpathSpec,
    session_out: str,
    image_path: str | None = None,
    *,
    mode: Mode = Mode.ALL_POINTS,
    slice_index: int = 0,
    seed: int = 0,
    tolerance: float | None = None,
    save: bool = True,
    backend: Backend | None = None,
    config: EngineConfig | None = None,
) -> dict:
    """Drive one recorded headless session; returns paths and final masks.

    With no image the session still records the gaze stream (useful as a
    replayable script); prompting and saving need an image.
    """
    if config is None:
        config = EngineConfig(
            dispatch="sync",
            tolerance=tolerance,
            session_out=session_out,
            gaze_source="feed",
        )
    if backend is None:
        backend = ReferenceBackend(config.tolerance)

    os.makedirs(os.path.dirname(os.path.abspath(session_out)), exist_ok=True)
    recorder = SessionRecorder(session_out)
    counter = itertools.count(0, 1000)
    engine = Engine(
        config,
        backend,
        recorder=recorder,
        allow_external_gaze=True,
        clock_us=lambda: next(counter),
    )

    saved: list[str] = []
    errors: list[str] = []

    def run(msg: dict) -> None:
        for reply in engine.handle_client(msg):
            if reply.get("type") == "error":
                errors.append(reply["message"])

    try:
        if image_path is not None:
            run({"type": "load_image", "path": image_path})
            run({"type": "set_mode", "mode": mode.value})
            if slice_index:
                run({"type": "set_slice", "z": slice_index})
        run({"type": "start_tracking"})
        for sample in simulate_scanpath(scanpath, seed):
            engine.ingest(sample)
        if save and image_path is not None:
            run({"type": "save_mask"})
            saved.extend(engine.saved_paths)
        final_masks = dict(engine.final_masks)
    finally:
        engine.close()

    if errors:
        raise RuntimeError(f"scripted session failed: {errors[0]}")
    return {
        "session": session_out,
        "saved_masks": saved,
        "final_masks": final_masks,
    }
