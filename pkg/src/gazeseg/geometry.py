"""Screen/image coordinate mapping and tracker calibration.

Two separate transforms live here. The calibration model is an affine fit
that aligns raw tracker output with true screen positions; the viewport
transform rescales screen pixels into image pixels for the displayed
slice. They compose as calibrate-then-map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateCalibration, OutsideViewport


@dataclass(frozen=True)
class ScreenPoint:
    """A position in screen pixels, x rightward, y downward."""

    sx: float
    sy: float


@dataclass(frozen=True)
class ImagePoint:
    """A sub-pixel position in image pixels."""

    ix: float
    iy: float


@dataclass(frozen=True)
class Viewport:
    """Where an iw x ih image slice is drawn on screen.

    (x0, y0) is the top-left corner of the displayed rect, (dw, dh) its
    displayed size in screen pixels.
    """

    x0: float
    y0: float
    dw: float
    dh: float
    iw: int
    ih: int

    def __post_init__(self) -> None:
        if not (self.dw > 0 and self.dh > 0):
            raise ValueError("displayed size must be positive")
        if self.iw < 1 or self.ih < 1:
            raise ValueError("image size must be at least 1x1")


@dataclass(frozen=True)
class CalibrationModel:
    """Affine map from raw tracker coordinates to screen coordinates.

    (x, y) -> (a11*x + a12*y + a13, a21*x + a22*y + a23)
    """

    a11: float
    a12: float
    a13: float
    a21: float
    a22: float
    a23: float
    rms_residual: float = 0.0

    @classmethod
    def identity(cls) -> "CalibrationModel":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    def coefficients(self) -> tuple[float, float, float, float, float, float]:
        return (self.a11, self.a12, self.a13, self.a21, self.a22, self.a23)


def fit_calibration(
    pairs: Sequence[tuple[ScreenPoint, ScreenPoint]],
) -> CalibrationModel:
    """Least-squares affine fit from (raw, target) point pairs.

    Needs at least 3 non-collinear raw points to be identifiable; the
    usual desk procedure supplies five. Raises DegenerateCalibration when
    the system is rank deficient or the fitted linear part is singular.
    """
    if len(pairs) < 3:
        raise DegenerateCalibration(f"need at least 3 pairs, got {len(pairs)}")

    raw = np.array([[p.sx, p.sy, 1.0] for p, _ in pairs], dtype=np.float64)
    tgt = np.array([[q.sx, q.sy] for _, q in pairs], dtype=np.float64)

    if np.linalg.matrix_rank(raw) < 3:
        raise DegenerateCalibration("raw points are collinear")

    coef, _, _, _ = np.linalg.lstsq(raw, tgt, rcond=None)
    a11, a21 = coef[0]
    a12, a22 = coef[1]
    a13, a23 = coef[2]

    det = a11 * a22 - a12 * a21
    if abs(det) < 1e-12:
        raise DegenerateCalibration("fitted linear part is singular")

    mapped = raw @ coef
    rms = float(np.sqrt(np.mean(np.sum((tgt - mapped) ** 2, axis=1))))
    return CalibrationModel(
        float(a11), float(a12), float(a13), float(a21), float(a22), float(a23), rms
    )


def apply_calibration(model: CalibrationModel, raw: ScreenPoint) -> ScreenPoint:
    """Map a raw tracker point into screen coordinates."""
    return ScreenPoint(
        model.a11 * raw.sx + model.a12 * raw.sy + model.a13,
        model.a21 * raw.sx + model.a22 * raw.sy + model.a23,
    )


def screen_to_image(vp: Viewport, s: ScreenPoint) -> ImagePoint:
    """Rescale a screen point into image pixels through the viewport.

    Raises OutsideViewport when the point does not land on the image;
    callers drop such samples from prompting.
    """
    ix = (s.sx - vp.x0) * vp.iw / vp.dw
    iy = (s.sy - vp.y0) * vp.ih / vp.dh
    if not (0.0 <= ix < vp.iw and 0.0 <= iy < vp.ih):
        raise OutsideViewport(f"({s.sx}, {s.sy}) maps to ({ix:.2f}, {iy:.2f})")
    return ImagePoint(ix, iy)


def image_to_screen(vp: Viewport, i: ImagePoint) -> ScreenPoint:
    """Exact algebraic inverse of screen_to_image on in-bounds points."""
    return ScreenPoint(vp.x0 + i.ix * vp.dw / vp.iw, vp.y0 + i.iy * vp.dh / vp.ih)


def read_calibration_points(path: str) -> list[tuple[ScreenPoint, ScreenPoint]]:
    """Parse a calibration point file.

    One pair per line: ``raw_x raw_y target_x target_y`` (space separated
    decimals). Blank lines and ``#`` comments are ignored.
    """
    pairs: list[tuple[ScreenPoint, ScreenPoint]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.split()
            if len(fields) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
            rx, ry, tx, ty = (float(f) for f in fields)
            if not all(math.isfinite(v) for v in (rx, ry, tx, ty)):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            pairs.append((ScreenPoint(rx, ry), ScreenPoint(tx, ty)))
    return pairs


def save_calibration(model: CalibrationModel, path: str) -> None:
    """Write a fitted model as key=value lines."""
    names = ("a11", "a12", "a13", "a21", "a22", "a23")
    with open(path, "w", encoding="ascii") as fh:
        for name, value in zip(names, model.coefficients()):
            fh.write(f"{name}={value!r}\n")
        fh.write(f"rms_residual={model.rms_residual!r}\n")


def load_calibration(path: str) -> CalibrationModel:
    values: dict[str, float] = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            key, _, raw = text.partition("=")
            values[key.strip()] = float(raw)
    try:
        return CalibrationModel(
            values["a11"], values["a12"], values["a13"],
            values["a21"], values["a22"], values["a23"],
            values.get("rms_residual", 0.0),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing coefficient {exc}") from exc
