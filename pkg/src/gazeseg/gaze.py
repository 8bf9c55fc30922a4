"""Gaze sample streams, dispersion-threshold fixation detection, and a
deterministic scanpath simulator used in place of tracker hardware.

Fixation detection is the classic I-DT rule: a maximal run of consecutive
valid samples whose bounding box satisfies width + height <= dispersion_px
becomes a fixation when it ends, provided its time span reaches the
minimum duration. A sample that would push the box over the threshold, or
an invalid sample, ends the current run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonMonotonicTimestamp
from .geometry import ScreenPoint

DEFAULT_DISPERSION_PX = 30.0
DEFAULT_MIN_DURATION_US = 100_000
DEFAULT_SAMPLE_RATE_HZ = 60.0


@dataclass(frozen=True)
class GazeSample:
    """One timestamped gaze measurement in screen pixels.

    ``valid`` is False when the tracker lost the eye; such samples still
    advance time and terminate fixation runs but never contribute points.
    """

    t_us: int
    point: ScreenPoint
    valid: bool = True


@dataclass(frozen=True)
class Fixation:
    """A completed dwell: centroid of its member samples plus timing."""

    centroid: ScreenPoint
    onset_us: int
    duration_us: int
    n_samples: int


@dataclass(frozen=True)
class ScanpathTarget:
    point: ScreenPoint
    dwell_ms: float
    jitter_px: float = 0.0


@dataclass(frozen=True)
class ScanpathSpec:
    """Synthetic gaze script: dwell on each target in order, with linear
    transit samples between targets."""

    targets: tuple[ScanpathTarget, ...]
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    transit_samples: int = 3

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        for t in self.targets:
            if t.dwell_ms <= 0:
                raise ValueError("dwell_ms must be positive")


class FixationDetector:
    """Streaming I-DT detector. Single-writer: one producer pushes samples
    in timestamp order; completed Fixation values are immutable."""

    def __init__(
        self,
        dispersion_px: float = DEFAULT_DISPERSION_PX,
        min_duration_us: int = DEFAULT_MIN_DURATION_US,
    ) -> None:
        self.dispersion_px = float(dispersion_px)
        self.min_duration_us = int(min_duration_us)
        self._last_t_us: int | None = None
        self._reset_run()

    def _reset_run(self) -> None:
        self._n = 0
        self._sum_x = 0.0
        self._sum_y = 0.0
        self._min_x = self._max_x = 0.0
        self._min_y = self._max_y = 0.0
        self._onset_us = 0
        self._last_run_t_us = 0

    def _start_run(self, s: GazeSample) -> None:
        self._n = 1
        self._sum_x = s.point.sx
        self._sum_y = s.point.sy
        self._min_x = self._max_x = s.point.sx
        self._min_y = self._max_y = s.point.sy
        self._onset_us = s.t_us
        self._last_run_t_us = s.t_us

    def _extend_run(self, s: GazeSample) -> None:
        self._n += 1
        self._sum_x += s.point.sx
        self._sum_y += s.point.sy
        self._min_x = min(self._min_x, s.point.sx)
        self._max_x = max(self._max_x, s.point.sx)
        self._min_y = min(self._min_y, s.point.sy)
        self._max_y = max(self._max_y, s.point.sy)
        self._last_run_t_us = s.t_us

    def _fits_run(self, s: GazeSample) -> bool:
        w = max(self._max_x, s.point.sx) - min(self._min_x, s.point.sx)
        h = max(self._max_y, s.point.sy) - min(self._min_y, s.point.sy)
        return w + h <= self.dispersion_px

    def _finish_run(self) -> list[Fixation]:
        emitted: list[Fixation] = []
        duration = self._last_run_t_us - self._onset_us
        if self._n >= 2 and duration >= self.min_duration_us:
            emitted.append(
                Fixation(
                    centroid=ScreenPoint(self._sum_x / self._n, self._sum_y / self._n),
                    onset_us=self._onset_us,
                    duration_us=duration,
                    n_samples=self._n,
                )
            )
        self._reset_run()
        return emitted

    def push(self, sample: GazeSample) -> list[Fixation]:
        """Consume one sample; returns the newly completed fixation, if any."""
        if self._last_t_us is not None and sample.t_us <= self._last_t_us:
            raise NonMonotonicTimestamp(
                f"t_us {sample.t_us} after {self._last_t_us}"
            )
        self._last_t_us = sample.t_us

        if not sample.valid:
            return self._finish_run() if self._n else []

        if self._n == 0:
            self._start_run(sample)
            return []
        if self._fits_run(sample):
            self._extend_run(sample)
            return []
        emitted = self._finish_run()
        self._start_run(sample)
        return emitted

    def flush(self) -> list[Fixation]:
        """End of stream: close out the current run."""
        return self._finish_run() if self._n else []

    def reset(self) -> None:
        """Drop the current candidate run (e.g. on slice change).

        Timestamp monotonicity tracking is kept: the stream itself
        continues.
        """
        self._reset_run()


def detect_fixations_batch(
    samples: list[GazeSample],
    dispersion_px: float = DEFAULT_DISPERSION_PX,
    min_duration_us: int = DEFAULT_MIN_DURATION_US,
) -> list[Fixation]:
    """Batch detection: identical to streaming push + flush."""
    det = FixationDetector(dispersion_px, min_duration_us)
    out: list[Fixation] = []
    for s in samples:
        out.extend(det.push(s))
    out.extend(det.flush())
    return out


def simulate_scanpath(spec: ScanpathSpec, rng_seed: int, t0_us: int = 0) -> list[GazeSample]:
    """Generate a deterministic 60 Hz-style sample stream from a scanpath.

    Each target contributes round(dwell_ms * rate / 1000) samples with
    Gaussian jitter, then ``transit_samples`` valid samples linearly
    interpolated toward the next target. Identical seed and spec give a
    byte-identical stream.
    """
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    rate = spec.sample_rate_hz
    samples: list[GazeSample] = []
    step = 0

    def stamp() -> int:
        # round-half-up of step/rate seconds, in microseconds
        return t0_us + int(step * 1_000_000.0 / rate + 0.5)

    for k, target in enumerate(spec.targets):
        n_dwell = int(target.dwell_ms * rate / 1000.0 + 0.5)
        if target.jitter_px > 0:
            jitter = rng.normal(0.0, target.jitter_px, size=(n_dwell, 2))
        else:
            jitter = np.zeros((n_dwell, 2))
        for j in range(n_dwell):
            samples.append(
                GazeSample(
                    stamp(),
                    ScreenPoint(
                        target.point.sx + float(jitter[j, 0]),
                        target.point.sy + float(jitter[j, 1]),
                    ),
                )
            )
            step += 1
        if k + 1 < len(spec.targets):
            nxt = spec.targets[k + 1].point
            m = spec.transit_samples
            for j in range(m):
                f = (j + 1) / (m + 1)
                samples.append(
                    GazeSample(
                        stamp(),
                        ScreenPoint(
                            target.point.sx + f * (nxt.sx - target.point.sx),
                            target.point.sy + f * (nxt.sy - target.point.sy),
                        ),
                    )
                )
                step += 1
    return samples


# --- gaze log files ---------------------------------------------------------
#
# One sample per line: "t_us sx sy valid" with valid in {0,1}. This is also
# the wire format accepted on the engine's external gaze feed channel.

def format_gaze_line(sample: GazeSample) -> str:
    v = 1 if sample.valid else 0
    return f"{sample.t_us} {sample.point.sx!r} {sample.point.sy!r} {v}"


def parse_gaze_line(line: str) -> GazeSample:
    fields = line.split()
    if len(fields) != 4:
        raise ValueError(f"expected 4 fields, got {len(fields)}: {line!r}")
    t_us = int(fields[0])
    sx, sy = float(fields[1]), float(fields[2])
    if fields[3] not in ("0", "1"):
        raise ValueError(f"valid flag must be 0 or 1: {line!r}")
    return GazeSample(t_us, ScreenPoint(sx, sy), fields[3] == "1")


def write_gaze_log(samples: list[GazeSample], path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for s in samples:
            fh.write(format_gaze_line(s) + "\n")


def read_gaze_log(path: str) -> list[GazeSample]:
    samples: list[GazeSample] = []
    last_t: int | None = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                s = parse_gaze_line(text)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            if last_t is not None and s.t_us <= last_t:
                raise NonMonotonicTimestamp(f"{path}:{lineno}: t_us {s.t_us}")
            last_t = s.t_us
            samples.append(s)
    return samples


def read_scanpath(path: str) -> ScanpathSpec:
    """Parse a scanpath script.

    Directive lines ``rate_hz=<f>`` and ``transit=<n>`` set stream
    parameters; every other non-comment line is a target:
    ``sx sy dwell_ms [jitter_px]``.
    """
    rate = DEFAULT_SAMPLE_RATE_HZ
    transit = 3
    targets: list[ScanpathTarget] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" in text:
                key, _, raw = text.partition("=")
                key = key.strip()
                if key == "rate_hz":
                    rate = float(raw)
                elif key == "transit":
                    transit = int(raw)
                else:
                    raise ValueError(f"{path}:{lineno}: unknown directive {key!r}")
                continue
            fields = text.split()
            if len(fields) not in (3, 4):
                raise ValueError(f"{path}:{lineno}: expected 3 or 4 fields")
            sx, sy, dwell = float(fields[0]), float(fields[1]), float(fields[2])
            jitter = float(fields[3]) if len(fields) == 4 else 0.0
            targets.append(ScanpathTarget(ScreenPoint(sx, sy), dwell, jitter))
    return ScanpathSpec(tuple(targets), sample_rate_hz=rate, transit_samples=transit)
