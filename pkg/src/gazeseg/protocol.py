"""Client side of the remote worker wire protocol.

Workers are separate processes that speak newline-delimited JSON on their
standard streams:

    -> {"type":"hello"}                                <- {"type":"hello_ack","name":...,"version":...}
    -> {"type":"set_image","image_path":...,"slice":z} <- {"type":"ready","image_id":...}
    -> {"type":"segment","request_id":n,
        "points":[[ix,iy],...],"labels":[1,...]}       <- {"type":"mask","request_id":n,"iw":...,
                                                           "ih":...,"rle":[...],"score":s}
    -> {"type":"shutdown"}                             <- (process exit 0)

Any ``error`` reply, malformed line, timeout, or worker death maps to
BackendUnavailable. The conversation is strictly serial.
"""

from __future__ import annotations

import json
import select
import shlex
import subprocess
import threading
import time

from .errors import BackendUnavailable
from .backend import SegmentRequest, SegmentResult
from .volume import ImageVolume, MaskSlice

DEFAULT_TIMEOUT_S = 30.0


def encode_line(message: dict) -> str:
    return json.dumps(message, separators=(",", ":"))


def decode_line(line: str) -> dict:
    obj = json.loads(line)
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError("protocol messages are JSON objects with a 'type'")
    return obj


class WorkerProcess:
    """A worker subprocess plus line-oriented send/receive with timeouts."""

    def __init__(self, command: str | list[str], timeout_s: float = DEFAULT_TIMEOUT_S):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout_s = timeout_s
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendUnavailable(f"cannot launch worker {argv!r}: {exc}") from exc

    def send(self, message: dict) -> None:
        if self._proc.poll() is not None:
            raise BackendUnavailable("worker exited")
        try:
            self._proc.stdin.write(encode_line(message) + "\n")
            self._proc.stdin.flush()
        except (OSError, ValueError) as exc:
            raise BackendUnavailable(f"worker pipe closed: {exc}") from exc

    def receive_line(self) -> str:
        """One reply line, honoring the timeout even if the worker stalls."""
        deadline = time.monotonic() + self.timeout_s
        stdout = self._proc.stdout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BackendUnavailable(f"worker reply timed out after {self.timeout_s}s")
            ready, _, _ = select.select([stdout], [], [], min(remaining, 0.25))
            if ready:
                line = stdout.readline()
                if line == "":
                    raise BackendUnavailable("worker closed its stdout")
                return line.rstrip("\n")
            if self._proc.poll() is not None:
                raise BackendUnavailable("worker exited mid-conversation")

    def receive(self) -> dict:
        line = self.receive_line()
        try:
            reply = decode_line(line)
        except (json.JSONDecodeError, ValueError) as exc:
            raise BackendUnavailable(f"malformed worker reply: {line!r}") from exc
        if reply.get("type") == "error":
            raise BackendUnavailable(f"worker error: {reply.get('message')}")
        return reply

    def shutdown(self, grace_s: float = 3.0) -> int | None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write(encode_line({"type": "shutdown"}) + "\n")
                self._proc.stdin.flush()
                self._proc.stdin.close()
            except (OSError, ValueError):
                pass
            try:
                self._proc.wait(grace_s)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        return self._proc.returncode

    def kill(self) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()


class RemoteBackend:
    """Backend adapter that drives a worker process over the wire protocol.

    prepare() maps to set_image (the worker does its per-slice
    precomputation there), segment() to one segment round trip. An
    internal lock keeps the conversation serial even when prepare and
    segment race from different threads.
    """

    name = "remote"

    def __init__(self, command: str | list[str], timeout_s: float = DEFAULT_TIMEOUT_S):
        self._command = command
        self._timeout_s = timeout_s
        self._lock = threading.Lock()
        self._worker: WorkerProcess | None = None

    def _ensure_worker(self) -> WorkerProcess:
        if self._worker is None:
            worker = WorkerProcess(self._command, self._timeout_s)
            worker.send({"type": "hello"})
            ack = worker.receive()
            if ack.get("type") != "hello_ack":
                worker.kill()
                raise BackendUnavailable(f"expected hello_ack, got {ack.get('type')!r}")
            self._worker = worker
        return self._worker

    def prepare(self, volume: ImageVolume, slice_index: int) -> None:
        if volume.source_path is None:
            raise BackendUnavailable("remote backend needs a file-backed volume")
        with self._lock:
            worker = self._ensure_worker()
            worker.send(
                {"type": "set_image", "image_path": volume.source_path, "slice": slice_index}
            )
            reply = worker.receive()
            if reply.get("type") != "ready":
                raise BackendUnavailable(f"expected ready, got {reply.get('type')!r}")
            if reply.get("image_id") != volume.image_id:
                raise BackendUnavailable(
                    "worker loaded different content "
                    f"({reply.get('image_id')!r} != {volume.image_id!r})"
                )

    def segment(self, request: SegmentRequest) -> SegmentResult:
        with self._lock:
            worker = self._ensure_worker()
            t0 = time.perf_counter()
            worker.send(
                {
                    "type": "segment",
                    "request_id": request.request_id,
                    "points": [[p.ix, p.iy] for p in request.prompt.points],
                    "labels": [p.label for p in request.prompt.points],
                }
            )
            reply = worker.receive()
            elapsed_ms = (time.perf_counter() - t0) * 1000.0
        if reply.get("type") != "mask":
            raise BackendUnavailable(f"expected mask, got {reply.get('type')!r}")
        try:
            mask = MaskSlice(
                int(reply["iw"]),
                int(reply["ih"]),
                tuple(int(r) for r in reply["rle"]),
            )
            score = float(reply["score"])
            request_id = int(reply["request_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"malformed mask reply: {exc}") from exc
        return SegmentResult(request_id, mask, score, elapsed_ms)

    def close(self) -> None:
        with self._lock:
            if self._worker is not None:
                self._worker.shutdown()
                self._worker = None


def run_transcript(
    command: str | list[str],
    messages: list[dict | str],
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> list[str]:
    """Conformance harness: send a scripted message sequence, return the
    raw reply lines.

    Entries may be dicts (encoded as protocol JSON) or raw strings (sent
    verbatim, for malformed-input probing). Every entry except a shutdown
    expects exactly one reply line. A trailing shutdown appends the exit
    code as ``exit <code>``.
    """
    worker = WorkerProcess(command, timeout_s)
    replies: list[str] = []
    try:
        for msg in messages:
            if isinstance(msg, str):
                if worker._proc.poll() is not None:
                    raise BackendUnavailable("worker exited early")
                worker._proc.stdin.write(msg + "\n")
                worker._proc.stdin.flush()
                replies.append(worker.receive_line())
                continue
            if msg.get("type") == "shutdown":
                code = worker.shutdown()
                replies.append(f"exit {code}")
                continue
            worker.send(msg)
            replies.append(worker.receive_line())
    finally:
        worker.kill()
    return replies
