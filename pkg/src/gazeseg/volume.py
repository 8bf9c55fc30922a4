"""Intensity volumes, display windowing, and binary mask serialization.

Volumes live in a minimal ``.gsv`` container: one ASCII header line
``GSV1 iw ih depth sx sy sz`` followed by little-endian signed 16-bit
intensities, row-major with x fastest. The format is bit-exact and
dependency-free; DICOM/NIfTI conversion is out-of-scope tooling.

Masks are binary, transported as run-length counts (alternating
background/foreground, starting with background) and stored as binary PGM
with a small ``key=value`` sidecar.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    IoFailure,
    LengthMismatch,
    SliceOutOfRange,
    TruncatedData,
)

GSV_MAGIC = "GSV1"


@dataclass(frozen=True)
class ImageVolume:
    """An intensity voxel grid; depth == 1 for plain 2D images.

    ``intensities`` has shape (depth, ih, iw), dtype int16. ``image_id``
    is the SHA-256 hex digest of the raw little-endian intensity bytes,
    so identical content always gets the identical id.
    """

    iw: int
    ih: int
    depth: int
    spacing: tuple[float, float, float]
    intensities: np.ndarray
    image_id: str
    source_path: str | None = None

    def __post_init__(self) -> None:
        if self.intensities.shape != (self.depth, self.ih, self.iw):
            raise DimensionMismatch(
                f"array shape {self.intensities.shape} != "
                f"({self.depth}, {self.ih}, {self.iw})"
            )
        if any(s <= 0 for s in self.spacing):
            raise DimensionMismatch("spacing components must be positive")


def _content_id(intensities: np.ndarray) -> str:
    return hashlib.sha256(
        np.ascontiguousarray(intensities, dtype="<i2").tobytes()
    ).hexdigest()


def make_volume(
    array: np.ndarray,
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
    source_path: str | None = None,
) -> ImageVolume:
    """Build a volume from a 2D (ih, iw) or 3D (depth, ih, iw) array."""
    arr = np.asarray(array, dtype=np.int16)
    if arr.ndim == 2:
        arr = arr[np.newaxis, :, :]
    if arr.ndim != 3:
        raise DimensionMismatch(f"expected 2D or 3D array, got {arr.ndim}D")
    depth, ih, iw = arr.shape
    return ImageVolume(iw, ih, depth, spacing, arr, _content_id(arr), source_path)


def load_volume(path: str) -> ImageVolume:
    try:
        with open(path, "rb") as fh:
            header = fh.readline()
            payload = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    try:
        text = header.decode("ascii").strip()
    except UnicodeDecodeError as exc:
        raise BadMagic(f"{path}: header is not ASCII") from exc
    fields = text.split()
    if not fields or fields[0] != GSV_MAGIC:
        raise BadMagic(f"{path}: expected {GSV_MAGIC!r} header")
    if len(fields) != 7:
        raise DimensionMismatch(f"{path}: header needs 7 fields, got {len(fields)}")
    try:
        iw, ih, depth = int(fields[1]), int(fields[2]), int(fields[3])
        spacing = (float(fields[4]), float(fields[5]), float(fields[6]))
    except ValueError as exc:
        raise DimensionMismatch(f"{path}: malformed header numbers") from exc
    if iw < 1 or ih < 1 or depth < 1:
        raise DimensionMismatch(f"{path}: non-positive dimensions")
    if any(s <= 0 for s in spacing):
        raise DimensionMismatch(f"{path}: non-positive spacing")

    expected = iw * ih * depth * 2
    if len(payload) < expected:
        raise TruncatedData(f"{path}: want {expected} payload bytes, have {len(payload)}")
    if len(payload) > expected:
        raise DimensionMismatch(f"{path}: {len(payload) - expected} trailing bytes")

    arr = np.frombuffer(payload, dtype="<i2").reshape(depth, ih, iw)
    arr = arr.astype(np.int16, copy=False)
    return ImageVolume(iw, ih, depth, spacing, arr, _content_id(arr), os.path.abspath(path))


def write_volume(vol: ImageVolume, path: str) -> None:
    sx, sy, sz = vol.spacing
    header = f"{GSV_MAGIC} {vol.iw} {vol.ih} {vol.depth} {sx!r} {sy!r} {sz!r}\n"
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(vol.intensities, dtype="<i2").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def get_slice(vol: ImageVolume, z: int) -> np.ndarray:
    """The (ih, iw) int16 plane at depth z."""
    if not 0 <= z < vol.depth:
        raise SliceOutOfRange(f"z={z} outside [0, {vol.depth})")
    return vol.intensities[z]


def default_window(slice_arr: np.ndarray) -> tuple[float, float]:
    """Full-range window: center midway, width covering min..max."""
    lo = float(slice_arr.min())
    hi = float(slice_arr.max())
    return (lo + hi) / 2.0, max(hi - lo, 1.0)


def window_normalize(slice_arr: np.ndarray, center: float, width: float) -> np.ndarray:
    """Linear map of [center - width/2, center + width/2] to 0..255.

    Values outside the window clamp; rounding is half-up to match the
    package-wide convention.
    """
    if width <= 0:
        raise ValueError("window width must be positive")
    t = (slice_arr.astype(np.float64) - center) / width * 255.0 + 127.5
    t = np.clip(t, 0.0, 255.0)
    return np.floor(t + 0.5).astype(np.uint8)


# --- run-length mask transport ----------------------------------------------

@dataclass
class MaskSlice:
    """A binary mask for one slice, in run-length form.

    Runs alternate background/foreground starting with background; a
    leading zero-length run encodes a mask that starts with foreground.
    ``version`` is assigned by the dispatcher on delivery.
    """

    iw: int
    ih: int
    runs: tuple[int, ...]
    version: int = 0

    def __post_init__(self) -> None:
        if sum(self.runs) != self.iw * self.ih:
            raise LengthMismatch(
                f"runs sum {sum(self.runs)} != {self.iw * self.ih}"
            )

    def to_array(self) -> np.ndarray:
        return rle_decode(self.runs, self.iw, self.ih)

    @classmethod
    def from_array(cls, mask: np.ndarray, version: int = 0) -> "MaskSlice":
        ih, iw = mask.shape
        return cls(iw, ih, tuple(rle_encode(mask)), version)

    def foreground_count(self) -> int:
        return sum(self.runs[1::2])


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major scan into alternating run lengths, background first."""
    flat = np.asarray(mask).astype(bool).ravel()
    if flat.size == 0:
        raise LengthMismatch("cannot encode an empty mask")
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    edges = np.concatenate(([0], boundaries, [flat.size]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs, iw: int, ih: int) -> np.ndarray:
    """Inverse of rle_encode; returns a bool array of shape (ih, iw)."""
    total = int(sum(runs))
    if total != iw * ih:
        raise LengthMismatch(f"runs sum {total} != {iw * ih}")
    if any(r < 0 for r in runs):
        raise LengthMismatch("negative run length")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    fg = False
    for r in runs:
        if fg and r:
            flat[pos : pos + r] = True
        pos += r
        fg = not fg
    return flat.reshape(ih, iw)


# --- PGM mask files ----------------------------------------------------------

def save_mask(
    mask: MaskSlice,
    path: str,
    *,
    image_id: str,
    slice_index: int,
    revision: int,
    mode: str,
) -> None:
    """Write the mask as binary PGM (P5, foreground 255) plus a
    ``<path>.meta`` sidecar carrying its provenance."""
    arr = mask.to_array()
    payload = np.where(arr, 255, 0).astype(np.uint8).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{mask.iw} {mask.ih}\n255\n".encode("ascii"))
            fh.write(payload)
        with open(path + ".meta", "w", encoding="ascii") as fh:
            fh.write(f"image_id={image_id}\n")
            fh.write(f"slice={slice_index}\n")
            fh.write(f"revision={revision}\n")
            fh.write(f"mode={mode}\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_mask_pgm(path: str) -> MaskSlice:
    """Read back a mask written by save_mask (strict P5 subset)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError(f"{path}: not a mask PGM")
    dims = parts[1].split()
    iw, ih = int(dims[0]), int(dims[1])
    payload = parts[3]
    if len(payload) != iw * ih:
        raise ValueError(f"{path}: payload length {len(payload)} != {iw * ih}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(ih, iw) > 0
    return MaskSlice.from_array(arr)


def read_meta(path: str) -> dict[str, str]:
    meta: dict[str, str] = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            text = line.strip()
            if not text:
                continue
            key, _, value = text.partition("=")
            meta[key] = value
    return meta
