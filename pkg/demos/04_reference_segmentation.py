"""The reference backend: seeded region growing
================================================

A deterministic, dependency-light stand-in for a promptable model: the
mask is every pixel reachable from a prompt point through 4-connected
paths that stay within an intensity tolerance of that seed. Good enough
to exercise the whole pipeline bit-exactly, with no weights.
"""

import os
import tempfile

import numpy as np

from gazeseg import (
    ReferenceBackend,
    SegmentRequest,
    load_volume,
    make_volume,
    save_mask,
    window_normalize,
    write_volume,
)
from gazeseg.prompts import Mode, PromptPoint, PromptSet

out_dir = tempfile.mkdtemp(prefix="gazeseg_demo_")

# --- a synthetic CT-ish phantom: noisy background, two organs ----------------
rng = np.random.Generator(np.random.PCG64(3))
slice_arr = rng.integers(-80, 40, size=(256, 256)).astype(np.int16)
yy, xx = np.mgrid[0:256, 0:256]
slice_arr[(xx - 90) ** 2 + (yy - 110) ** 2 < 45**2] = 310   # round organ
slice_arr[(np.abs(xx - 190) < 24) & (np.abs(yy - 160) < 50)] = 620  # bright lesion

vol = make_volume(slice_arr, spacing=(0.7, 0.7, 1.0))
path = os.path.join(out_dir, "phantom.gsv")
write_volume(vol, path)
vol = load_volume(path)
print(f"phantom volume {vol.iw}x{vol.ih}, id {vol.image_id[:12]}..., at {path}")

# --- prepare once, then segment per prompt -----------------------------------
backend = ReferenceBackend()  # tolerance defaults to 10% of slice range
backend.prepare(vol, slice_index=0)

prompt = PromptSet(vol.image_id, 0, Mode.ALL_POINTS, (PromptPoint(90, 110, 0),), revision=1)
result = backend.segment(SegmentRequest(0, vol.image_id, 0, prompt))
organ_px = result.mask.foreground_count()
print(f"\nseed (90,110): {organ_px} px in {result.elapsed_ms:.1f} ms")

# adding a second prompt point unions the lesion into the mask
prompt2 = PromptSet(
    vol.image_id, 0, Mode.ALL_POINTS,
    (PromptPoint(90, 110, 0), PromptPoint(190, 160, 1)), revision=2,
)
result2 = backend.segment(SegmentRequest(1, vol.image_id, 0, prompt2))
print(f"seeds (90,110)+(190,160): {result2.mask.foreground_count()} px")
assert result2.mask.foreground_count() > organ_px

# --- mask transport and storage ------------------------------------------------
runs = result2.mask.runs
print(f"\nRLE transport: {len(runs)} runs, first 10: {list(runs[:10])}")

mask_path = os.path.join(out_dir, "phantom_mask.pgm")
save_mask(result2.mask, mask_path, image_id=vol.image_id, slice_index=0,
          revision=2, mode="all_points")
print(f"saved mask -> {mask_path} (+ .meta sidecar)")

# --- display windowing -----------------------------------------------------------
# Medical intensity ranges don't fit 8 bits; window center/width picks the
# band to show. The engine sends exactly these bytes to the UI.
display = window_normalize(vol.intensities[0], center=300.0, width=800.0)
print(f"\nwindowed display bytes: shape {display.shape}, "
      f"organ mean {display[(xx - 90) ** 2 + (yy - 110) ** 2 < 45 ** 2].mean():.0f}, "
      f"background mean {display[:40, :40].mean():.0f}")
