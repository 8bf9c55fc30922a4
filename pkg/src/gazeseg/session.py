"""Append-only session logs: recording, bit-exact replay, dataset export.

A session log (``.gss``) holds one JSON object per line with fixed field
order (seq, t_us, kind, payload). seq is dense from 0; t_us never goes
backwards. The format is human-inspectable, diff-able, and append-safe
after a crash: reopening for append truncates an incomplete last line.

Replay regenerates prompts and masks by pushing the recorded gaze stream
through the identical fixation -> prompt -> dispatch pipeline, but with a
synchronous dispatcher so every prompt revision is segmented; live
coalescing is timing-dependent and would break determinism.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import CorruptLog, IoFailure, TimestampRegression
from .gaze import GazeSample
from .geometry import ScreenPoint
from .volume import MaskSlice, save_mask

if TYPE_CHECKING:
    from .backend import Backend

K_CONFIG = "config"
K_IMAGE_LOADED = "image_loaded"
K_SLICE_CHANGED = "slice_changed"
K_MODE_CHANGED = "mode_changed"
K_GAZE = "gaze"
K_PROMPT_ISSUED = "prompt_issued"
K_MASK_PRODUCED = "mask_produced"
K_MASK_SAVED = "mask_saved"
K_CLEARED = "cleared"

KNOWN_KINDS = frozenset(
    {
        K_CONFIG,
        K_IMAGE_LOADED,
        K_SLICE_CHANGED,
        K_MODE_CHANGED,
        K_GAZE,
        K_PROMPT_ISSUED,
        K_MASK_PRODUCED,
        K_MASK_SAVED,
        K_CLEARED,
    }
)


@dataclass(frozen=True)
class SessionEvent:
    seq: int
    t_us: int
    kind: str
    payload: dict


def serialize_event(event: SessionEvent) -> str:
    return json.dumps(
        {
            "seq": event.seq,
            "t_us": event.t_us,
            "kind": event.kind,
            "payload": event.payload,
        },
        separators=(",", ":"),
    )


def parse_event(line: str) -> SessionEvent:
    try:
        obj = json.loads(line)
        return SessionEvent(
            int(obj["seq"]), int(obj["t_us"]), str(obj["kind"]), dict(obj["payload"])
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorruptLog(f"bad event line: {line!r}") from exc


def gaze_payload(sample: GazeSample) -> dict:
    return {
        "t_us": sample.t_us,
        "sx": sample.point.sx,
        "sy": sample.point.sy,
        "valid": 1 if sample.valid else 0,
    }


def gaze_from_payload(payload: dict) -> GazeSample:
    try:
        return GazeSample(
            int(payload["t_us"]),
            ScreenPoint(float(payload["sx"]), float(payload["sy"])),
            bool(payload["valid"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptLog(f"bad gaze payload: {payload!r}") from exc


class SessionRecorder:
    """Single-writer append log. Reopening an existing log resumes its
    seq/t_us counters after truncating any crash-torn last line."""

    def __init__(self, path: str) -> None:
        self.path = path
        self._next_seq = 0
        self._last_t_us = 0
        try:
            if os.path.exists(path):
                self._resume(path)
            self._fh = open(path, "a", encoding="ascii")
        except OSError as exc:
            raise IoFailure(f"cannot open session log {path}: {exc}") from exc

    def _resume(self, path: str) -> None:
        with open(path, "r+b") as fh:
            data = fh.read()
            keep = len(data)
            if data and not data.endswith(b"\n"):
                cut = data.rfind(b"\n")
                keep = cut + 1 if cut >= 0 else 0
                fh.truncate(keep)
        for line in data[:keep].decode("ascii").splitlines():
            if not line:
                continue
            event = parse_event(line)
            self._next_seq = event.seq + 1
            self._last_t_us = max(self._last_t_us, event.t_us)

    def record(self, kind: str, payload: dict, t_us: int) -> SessionEvent:
        if t_us < self._last_t_us:
            raise TimestampRegression(f"t_us {t_us} < {self._last_t_us}")
        event = SessionEvent(self._next_seq, t_us, kind, payload)
        try:
            self._fh.write(serialize_event(event) + "\n")
            self._fh.flush()
        except OSError as exc:
            raise IoFailure(f"cannot append to {self.path}: {exc}") from exc
        self._next_seq += 1
        self._last_t_us = t_us
        return event

    def close(self) -> None:
        self._fh.close()


def read_session(path: str) -> list[SessionEvent]:
    """Parse and validate a completed session log.

    Raises CorruptLog on malformed lines (including a truncated final
    line), non-dense seq, or a t_us regression.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CorruptLog(f"cannot read {path}: {exc}") from exc
    if data and not data.endswith(b"\n"):
        raise CorruptLog(f"{path}: truncated final line")
    events: list[SessionEvent] = []
    last_t = 0
    for lineno, raw in enumerate(data.decode("ascii", errors="replace").splitlines()):
        if not raw:
            raise CorruptLog(f"{path}:{lineno + 1}: blank line")
        event = parse_event(raw)
        if event.seq != len(events):
            raise CorruptLog(f"{path}:{lineno + 1}: seq {event.seq}, expected {len(events)}")
        if event.t_us < last_t:
            raise CorruptLog(f"{path}:{lineno + 1}: t_us regressed")
        if event.kind not in KNOWN_KINDS:
            raise CorruptLog(f"{path}:{lineno + 1}: unknown kind {event.kind!r}")
        last_t = event.t_us
        events.append(event)
    return events


def replay(
    session_path: str, backend: "Backend", out_dir: str | None = None
) -> dict[tuple[str, int], MaskSlice]:
    """Re-run a recorded session headlessly and deterministically.

    Gaze events flow through the same fixation/prompt/dispatch pipeline
    the live engine used, with a synchronous dispatcher. Recorded
    mask_saved events are re-saved into ``out_dir`` under their original
    basename so live and replayed files can be byte-compared. Returns the
    final mask per (image_id, slice_index).
    """
    from .engine import Engine, EngineConfig

    events = read_session(session_path)

    config = EngineConfig(dispatch="sync")
    for event in events:
        if event.kind == K_CONFIG:
            config = _config_from_payload(event.payload)
            break

    engine = Engine(config, backend, recorder=None, allow_external_gaze=True)
    try:
        engine.handle_client({"type": "start_tracking"})
        save_count = 0
        for event in events:
            kind, payload = event.kind, event.payload
            if kind == K_IMAGE_LOADED:
                replies = engine.handle_client(
                    {"type": "load_image", "path": payload["path"]}
                )
                _raise_on_error(replies, session_path)
                if engine.volume is not None and payload.get("image_id") not in (
                    None,
                    engine.volume.image_id,
                ):
                    raise CorruptLog(
                        f"{payload['path']}: content changed since recording"
                    )
            elif kind == K_SLICE_CHANGED:
                _raise_on_error(
                    engine.handle_client({"type": "set_slice", "z": payload["z"]}),
                    session_path,
                )
            elif kind == K_MODE_CHANGED:
                _raise_on_error(
                    engine.handle_client({"type": "set_mode", "mode": payload["mode"]}),
                    session_path,
                )
            elif kind == K_GAZE:
                engine.ingest(gaze_from_payload(payload))
            elif kind == K_CLEARED:
                engine.handle_client({"type": "clear"})
            elif kind == K_MASK_SAVED and out_dir is not None:
                os.makedirs(out_dir, exist_ok=True)
                name = os.path.basename(payload.get("path", ""))
                if not name:
                    name = f"mask_{save_count:04d}.pgm"
                replies = engine.handle_client(
                    {"type": "save_mask", "path": os.path.join(out_dir, name)}
                )
                _raise_on_error(replies, session_path)
                save_count += 1
        return dict(engine.final_masks)
    finally:
        engine.close(close_backend=False)


def _raise_on_error(replies: list[dict], session_path: str) -> None:
    for reply in replies:
        if reply.get("type") == "error":
            raise CorruptLog(f"{session_path}: replay failed: {reply.get('message')}")


def _config_from_payload(payload: dict):
    from .engine import EngineConfig

    kwargs = {}
    for key in (
        "dispersion_px",
        "min_duration_us",
        "min_spacing_px",
        "tolerance",
        "display_w",
        "display_h",
    ):
        if payload.get(key) is not None:
            kwargs[key] = payload[key]
    return EngineConfig(dispatch="sync", **kwargs)


def export_dataset(session_path: str, out_dir: str) -> list[dict]:
    """Write one (volume, gaze log, mask) triple per recorded save.

    The gaze log for a triple holds every gaze event up to that save; the
    mask is decoded from the last mask_produced event before it. Entries
    are listed in ``manifest.txt`` as
    ``volume=<path> gaze=<path> mask=<path> slice=<z>`` lines.
    """
    events = read_session(session_path)
    os.makedirs(out_dir, exist_ok=True)

    triples: list[dict] = []
    gaze_lines: list[str] = []
    volume_path: str | None = None
    image_id: str | None = None
    slice_index = 0
    mode = "all_points"
    last_mask: MaskSlice | None = None
    last_revision = 0

    for event in events:
        kind, payload = event.kind, event.payload
        if kind == K_IMAGE_LOADED:
            volume_path = payload.get("path")
            image_id = payload.get("image_id")
            slice_index = 0
        elif kind == K_SLICE_CHANGED:
            slice_index = int(payload["z"])
        elif kind == K_MODE_CHANGED:
            mode = str(payload["mode"])
        elif kind == K_GAZE:
            sample = gaze_from_payload(payload)
            v = 1 if sample.valid else 0
            gaze_lines.append(
                f"{sample.t_us} {sample.point.sx!r} {sample.point.sy!r} {v}"
            )
        elif kind == K_PROMPT_ISSUED:
            last_revision = int(payload.get("revision", last_revision))
        elif kind == K_MASK_PRODUCED:
            try:
                last_mask = MaskSlice(
                    int(payload["iw"]),
                    int(payload["ih"]),
                    tuple(int(r) for r in payload["rle"]),
                    int(payload.get("version", 0)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptLog(f"bad mask_produced payload: {exc}") from exc
        elif kind == K_MASK_SAVED:
            if last_mask is None or volume_path is None:
                raise CorruptLog("mask_saved with no produced mask or image")
            k = len(triples)
            gaze_path = os.path.join(out_dir, f"gaze_{k:04d}.log")
            mask_path = os.path.join(out_dir, f"mask_{k:04d}.pgm")
            with open(gaze_path, "w", encoding="ascii") as fh:
                fh.write("\n".join(gaze_lines) + ("\n" if gaze_lines else ""))
            save_mask(
                last_mask,
                mask_path,
                image_id=image_id or "",
                slice_index=slice_index,
                revision=last_revision,
                mode=mode,
            )
            triples.append(
                {
                    "volume": volume_path,
                    "gaze": gaze_path,
                    "mask": mask_path,
                    "slice": slice_index,
                    "image_id": image_id,
                }
            )

    manifest_path = os.path.join(out_dir, "manifest.txt")
    with open(manifest_path, "w", encoding="ascii") as fh:
        for t in triples:
            fh.write(
                f"volume={t['volume']} gaze={t['gaze']} mask={t['mask']} slice={t['slice']}\n"
            )
    return triples
