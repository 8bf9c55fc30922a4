"""Prompt modes: one point vs the whole dwell sequence
=======================================================

Fixation centroids become integer point prompts for the segmentation
backend. ONE_POINT keeps only the newest dwell (coarse single-object
masks); ALL_POINTS keeps the history so the user refines a mask simply
by looking at the regions the backend missed.
"""

from gazeseg import Mode, ScreenPoint, Viewport, accumulate, build_prompt, clear
from gazeseg.gaze import Fixation
from gazeseg.prompts import empty_prompt

vp = Viewport(x0=0, y0=0, dw=512, dh=512, iw=512, ih=512)


def dwell(x, y, k):
    return Fixation(ScreenPoint(x, y), onset_us=k * 300_000, duration_us=200_000, n_samples=12)


history = [
    dwell(120.4, 200.2, 0),   # main target
    dwell(124.0, 203.0, 1),   # re-fixation a few px away: spacing filter drops it
    dwell(300.0, 310.0, 2),   # under-segmented lobe
    dwell(700.0, 90.0, 3),    # glance off the image (outside the viewport)
    dwell(430.7, 255.5, 4),   # boundary region
]

one = build_prompt(Mode.ONE_POINT, history, vp, image_id="demo", slice_index=0)
print("ONE_POINT prompt (newest surviving dwell only):")
print(f"  {one.coords()}")

many = build_prompt(Mode.ALL_POINTS, history, vp, "demo", 0, min_spacing_px=10)
print("\nALL_POINTS prompt (ordered, spacing-filtered):")
print(f"  {many.coords()}")

# --- the live refinement loop ---------------------------------------------------
# The engine doesn't rebuild from history; it accumulates dwell by dwell.
# The revision only moves when the point list actually changes, and every
# revision triggers one segmentation request.

prompt = empty_prompt("demo", 0, Mode.ALL_POINTS)
print("\nstreaming accumulation:")
for k, f in enumerate(history):
    updated = accumulate(prompt, f, vp, min_spacing_px=10)
    changed = "new prompt " if updated is not prompt else "no change  "
    print(f"  dwell {k}: {changed} revision={updated.revision} points={len(updated.points)}")
    prompt = updated

assert prompt.coords() == many.coords()
print("\nstreaming result matches the batch build")

# clear() starts a new target: empty points, revision still moves forward
fresh = clear(prompt)
print(f"after clear: points={fresh.points} revision={fresh.revision}")
