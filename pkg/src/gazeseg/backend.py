"""Segmentation backends and the request dispatcher.

The backend contract is deliberately small: prepare a slice once (so the
expensive per-image work is out of the prompt loop), then answer segment
requests with a binary mask. The built-in reference backend is a
deterministic seeded region grower: pixels reachable from a prompt point
through 4-connected paths staying within an intensity tolerance of that
seed. It stands in for any promptable model during tests and replay.

The latest-wins dispatcher keeps the display glued to the newest prompt:
while a request is in flight, newer submissions overwrite each other and
only the newest is sent when the backend frees up. Stale results are
dropped, never delivered out of order.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np
from scipy import ndimage

from .errors import BackendUnavailable, EmptyPrompt, NotPrepared
from .prompts import PromptSet
from .volume import ImageVolume, MaskSlice, get_slice

DEFAULT_TOLERANCE_FRACTION = 0.10


@dataclass(frozen=True)
class SegmentRequest:
    request_id: int
    image_id: str
    slice_index: int
    prompt: PromptSet


@dataclass
class SegmentResult:
    request_id: int
    mask: MaskSlice
    score: float
    elapsed_ms: float


class Backend(Protocol):
    def prepare(self, volume: ImageVolume, slice_index: int) -> None: ...

    def segment(self, request: SegmentRequest) -> SegmentResult: ...

    def close(self) -> None: ...


def region_grow(
    intensities: np.ndarray, seeds: list[tuple[int, int]], tolerance: float
) -> np.ndarray:
    """Union of 4-connected regions grown from each seed.

    A pixel belongs to seed s's region when some 4-connected path links
    them with every pixel q on it satisfying |I(q) - I(s)| <= tolerance;
    the reference intensity is per seed. Equivalent to the connected
    component of the thresholded band containing the seed, which is how
    it is computed here.
    """
    ih, iw = intensities.shape
    out = np.zeros((ih, iw), dtype=bool)
    labeled_bands: dict[int, np.ndarray] = {}
    for ix, iy in seeds:
        if not (0 <= ix < iw and 0 <= iy < ih):
            raise ValueError(f"seed ({ix}, {iy}) outside {iw}x{ih} slice")
        ref = int(intensities[iy, ix])
        labels = labeled_bands.get(ref)
        if labels is None:
            band = np.abs(intensities.astype(np.int32) - ref) <= tolerance
            labels, _ = ndimage.label(band)  # default structure: 4-connected
            labeled_bands[ref] = labels
        out |= labels == labels[iy, ix]
    return out


class ReferenceBackend:
    """Deterministic in-process backend built on region growing.

    ``tolerance`` defaults to 10% of the prepared slice's intensity range;
    pass an explicit value to pin it. Confidence is always reported as 1.0.
    """

    name = "reference"

    def __init__(self, tolerance: float | None = None) -> None:
        self.tolerance = tolerance
        self._prepared: dict[tuple[str, int], tuple[np.ndarray, float]] = {}

    def prepare(self, volume: ImageVolume, slice_index: int) -> None:
        slice_arr = get_slice(volume, slice_index)
        if self.tolerance is not None:
            tol = float(self.tolerance)
        else:
            lo, hi = int(slice_arr.min()), int(slice_arr.max())
            tol = DEFAULT_TOLERANCE_FRACTION * (hi - lo)
        self._prepared[(volume.image_id, slice_index)] = (slice_arr, tol)

    def segment(self, request: SegmentRequest) -> SegmentResult:
        key = (request.image_id, request.slice_index)
        if key not in self._prepared:
            raise NotPrepared(f"slice {key} was never prepared")
        if not request.prompt.points:
            raise EmptyPrompt("segment called with no prompt points")
        slice_arr, tol = self._prepared[key]
        t0 = time.perf_counter()
        mask = region_grow(slice_arr, [(p.ix, p.iy) for p in request.prompt.points], tol)
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        return SegmentResult(request.request_id, MaskSlice.from_array(mask), 1.0, elapsed_ms)

    def close(self) -> None:
        self._prepared.clear()


ResultCallback = Callable[[SegmentRequest, SegmentResult], None]
ErrorCallback = Callable[[SegmentRequest, Exception], None]


class _DeliveryGate:
    """Shared delivery bookkeeping: monotonic request ids, version stamps."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._delivered_max = -1
        self._next_version = 1
        self._latest: SegmentResult | None = None

    def admit(self, result: SegmentResult) -> SegmentResult | None:
        """Stamp and record the result, or return None if it is stale."""
        with self._lock:
            if result.request_id <= self._delivered_max:
                return None
            self._delivered_max = result.request_id
            stamped = replace(
                result, mask=replace(result.mask, version=self._next_version)
            )
            self._next_version += 1
            self._latest = stamped
            return stamped

    def latest(self) -> SegmentResult | None:
        with self._lock:
            return self._latest


class SynchronousDispatcher:
    """Every request is segmented, in submit order, on the caller's thread.

    Used by replay: live coalescing depends on timing, and determinism
    beats fidelity for dataset generation.
    """

    coalescing = False

    def __init__(
        self,
        backend: Backend,
        on_result: ResultCallback | None = None,
        on_error: ErrorCallback | None = None,
    ) -> None:
        self._backend = backend
        self._on_result = on_result
        self._on_error = on_error
        self._gate = _DeliveryGate()

    def submit(self, request: SegmentRequest) -> None:
        try:
            result = self._backend.segment(request)
        except Exception as exc:  # noqa: BLE001 - backend faults surface via callback
            if self._on_error is not None:
                self._on_error(request, exc)
                return
            raise
        delivered = self._gate.admit(result)
        if delivered is not None and self._on_result is not None:
            self._on_result(request, delivered)

    def poll(self) -> SegmentResult | None:
        return self._gate.latest()

    def close(self) -> None:
        pass


class LatestWinsDispatcher:
    """Single in-flight backend call; a backlog collapses to its newest
    request and superseded results are silently dropped."""

    coalescing = True

    def __init__(
        self,
        backend: Backend,
        on_result: ResultCallback | None = None,
        on_error: ErrorCallback | None = None,
    ) -> None:
        self._backend = backend
        self._on_result = on_result
        self._on_error = on_error
        self._gate = _DeliveryGate()
        self._cond = threading.Condition()
        self._pending: SegmentRequest | None = None
        self._stopping = False
        self._idle = True
        self._worker = threading.Thread(
            target=self._run, name="segment-dispatcher", daemon=True
        )
        self._worker.start()

    def submit(self, request: SegmentRequest) -> None:
        """Never blocks: replaces any not-yet-sent pending request."""
        with self._cond:
            if self._stopping:
                return
            self._pending = request
            self._cond.notify()

    def poll(self) -> SegmentResult | None:
        return self._gate.latest()

    def drain(self, timeout: float = 10.0) -> bool:
        """Block until no request is pending or in flight. Test hook."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._pending is not None or not self._idle:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
        return True

    def close(self, timeout: float = 2.0) -> None:
        with self._cond:
            self._stopping = True
            self._pending = None
            self._cond.notify()
        self._worker.join(timeout)

    def _run(self) -> None:
        while True:
            with self._cond:
                while self._pending is None and not self._stopping:
                    self._idle = True
                    self._cond.notify_all()
                    self._cond.wait()
                if self._stopping:
                    return
                request = self._pending
                self._pending = None
                self._idle = False
            try:
                result = self._backend.segment(request)
            except Exception as exc:  # noqa: BLE001
                if self._on_error is not None:
                    self._on_error(request, exc)
                continue
            delivered = self._gate.admit(result)
            if delivered is not None and self._on_result is not None:
                self._on_result(request, delivered)


def make_backend(selector: str, tolerance: float | None = None) -> Backend:
    """Build a backend from a config selector.

    ``reference`` gives the in-process region grower; ``remote:<command>``
    launches a worker subprocess speaking the wire protocol.
    """
    if selector == "reference":
        return ReferenceBackend(tolerance)
    if selector.startswith("remote:"):
        from .protocol import RemoteBackend

        command = selector.split(":", 1)[1].strip()
        if not command:
            raise BackendUnavailable("remote selector needs a command line")
        return RemoteBackend(command)
    raise BackendUnavailable(f"unknown backend selector {selector!r}")
