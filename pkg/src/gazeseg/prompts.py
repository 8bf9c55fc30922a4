"""Turn fixation history into point prompts for a segmentation backend.

Two modes: ONE_POINT keeps only the newest fixation (coarse single-object
masks); ALL_POINTS keeps the whole dwell sequence so the user refines a
mask simply by looking at under-segmented regions. Points are fixation
centroids, not raw samples: raw 60 Hz data would flood the backend with
near-duplicates. A Chebyshev spacing filter thins clustered centroids.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .errors import ModeMismatch, NoPromptPoints, OutsideViewport
from .gaze import Fixation
from .geometry import Viewport, screen_to_image

DEFAULT_MIN_SPACING_PX = 10


class Mode(str, enum.Enum):
    ONE_POINT = "one_point"
    ALL_POINTS = "all_points"


@dataclass(frozen=True)
class PromptPoint:
    """A foreground point prompt in integer image pixels."""

    ix: int
    iy: int
    source_onset_us: int
    label: int = 1  # foreground is the only label


@dataclass(frozen=True)
class PromptSet:
    """Ordered prompt points for one image slice; the unit sent to a backend."""

    image_id: str
    slice_index: int
    mode: Mode
    points: tuple[PromptPoint, ...]
    revision: int

    def coords(self) -> tuple[tuple[int, int], ...]:
        return tuple((p.ix, p.iy) for p in self.points)


def round_half_up(x: float) -> int:
    """Nearest integer, ties toward +inf. Fixed so replay is bit-exact."""
    return int(math.floor(x + 0.5))


def map_fixation(fix: Fixation, vp: Viewport) -> PromptPoint | None:
    """Map a fixation centroid into integer image pixels.

    Returns None when the centroid is off the displayed image. Rounding
    can push a coordinate to the upper bound, so clamp into the slice.
    """
    try:
        ip = screen_to_image(vp, fix.centroid)
    except OutsideViewport:
        return None
    ix = min(round_half_up(ip.ix), vp.iw - 1)
    iy = min(round_half_up(ip.iy), vp.ih - 1)
    return PromptPoint(ix, iy, fix.onset_us)


def _too_close(a: PromptPoint, b: PromptPoint, min_spacing_px: float) -> bool:
    return max(abs(a.ix - b.ix), abs(a.iy - b.iy)) < min_spacing_px


def build_prompt(
    mode: Mode,
    fixations: list[Fixation],
    vp: Viewport,
    image_id: str,
    slice_index: int,
    revision: int = 0,
    min_spacing_px: float = DEFAULT_MIN_SPACING_PX,
) -> PromptSet:
    """Build a prompt set from a whole fixation history.

    Fixations whose centroid misses the viewport are dropped. ONE_POINT
    keeps the newest survivor; ALL_POINTS keeps all survivors, greedily
    dropping any point within min_spacing_px (Chebyshev) of an earlier
    kept one. Raises NoPromptPoints when nothing survives.
    """
    mapped = [p for p in (map_fixation(f, vp) for f in fixations) if p is not None]
    if not mapped:
        raise NoPromptPoints("no fixation maps into the viewport")

    if mode is Mode.ONE_POINT:
        kept = [mapped[-1]]
    else:
        kept = []
        for p in mapped:
            if not any(_too_close(p, q, min_spacing_px) for q in kept):
                kept.append(p)
    return PromptSet(image_id, slice_index, mode, tuple(kept), revision)


def accumulate(
    prev: PromptSet,
    new_fixation: Fixation,
    vp: Viewport,
    min_spacing_px: float = DEFAULT_MIN_SPACING_PX,
) -> PromptSet:
    """Streaming refinement: append the new fixation's point if it lands
    in-viewport and clears the spacing filter.

    Returns ``prev`` unchanged when the point list does not change; the
    revision increments exactly when it does.
    """
    if prev.mode is not Mode.ALL_POINTS:
        raise ModeMismatch("accumulate requires ALL_POINTS mode")
    p = map_fixation(new_fixation, vp)
    if p is None or any(_too_close(p, q, min_spacing_px) for q in prev.points):
        return prev
    return replace(prev, points=prev.points + (p,), revision=prev.revision + 1)


def replace_point(prev: PromptSet, new_fixation: Fixation, vp: Viewport) -> PromptSet:
    """ONE_POINT streaming update: the newest in-viewport fixation wins.

    No change (and no revision bump) when the fixation misses the image or
    lands on the same pixel as the current point.
    """
    if prev.mode is not Mode.ONE_POINT:
        raise ModeMismatch("replace_point requires ONE_POINT mode")
    p = map_fixation(new_fixation, vp)
    if p is None:
        return prev
    if prev.points and (prev.points[0].ix, prev.points[0].iy) == (p.ix, p.iy):
        return prev
    return replace(prev, points=(p,), revision=prev.revision + 1)


def clear(prev: PromptSet) -> PromptSet:
    """Start a new target: empty point list, revision incremented."""
    return replace(prev, points=(), revision=prev.revision + 1)


def empty_prompt(image_id: str, slice_index: int, mode: Mode, revision: int = 0) -> PromptSet:
    return PromptSet(image_id, slice_index, mode, (), revision)
