"""Calibration and coordinate mapping
=====================================

Two transforms take a raw tracker measurement to an image pixel: a
per-user affine calibration (raw tracker output -> true screen position)
and the viewport rescale (screen -> image pixels of the displayed slice).
"""

import numpy as np

from gazeseg import (
    ScreenPoint,
    Viewport,
    apply_calibration,
    fit_calibration,
    image_to_screen,
    screen_to_image,
)

# --- fit a calibration from five point pairs ---------------------------------
# The user looked at five known targets; the tracker reported slightly
# scaled and shifted positions.

targets = [
    ScreenPoint(100, 100),
    ScreenPoint(1820, 100),
    ScreenPoint(1820, 980),
    ScreenPoint(100, 980),
    ScreenPoint(960, 540),
]
rng = np.random.Generator(np.random.PCG64(0))
raw = [ScreenPoint(0.96 * p.sx + 18, 1.03 * p.sy - 11) for p in targets]

model = fit_calibration(list(zip(raw, targets)))
print("fitted affine coefficients:")
print(f"  x' = {model.a11:+.4f} x {model.a12:+.4f} y {model.a13:+.2f}")
print(f"  y' = {model.a21:+.4f} x {model.a22:+.4f} y {model.a23:+.2f}")
print(f"  rms residual: {model.rms_residual:.2e} px")

measured = ScreenPoint(930.0, 520.0)
corrected = apply_calibration(model, measured)
print(f"\ntracker said {measured}, calibrated gaze is ({corrected.sx:.1f}, {corrected.sy:.1f})")

# --- map through the display viewport -----------------------------------------
# A 1024x1024 slice shown as a 512x512 rect at screen offset (100, 50):
# every screen pixel covers a 2x2 patch of image pixels.

vp = Viewport(x0=100, y0=50, dw=512, dh=512, iw=1024, ih=1024)
on_image = screen_to_image(vp, ScreenPoint(356.0, 306.0))
print(f"\nscreen (356, 306) -> image ({on_image.ix:.1f}, {on_image.iy:.1f})")

back = image_to_screen(vp, on_image)
print(f"and back -> screen ({back.sx:.1f}, {back.sy:.1f})")

# Points off the displayed rect raise OutsideViewport; the prompt builder
# drops those samples instead of inventing coordinates.
from gazeseg import OutsideViewport

try:
    screen_to_image(vp, ScreenPoint(50.0, 40.0))
except OutsideViewport as exc:
    print(f"\n(50, 40) is not over the image: {exc}")
