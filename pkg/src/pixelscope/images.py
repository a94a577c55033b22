"""Image decoding, cropping and resizing.

Pixels live in [0, 1] as float64, shape (H, W, C), row-major (y, x, c).
Downscaling uses area averaging (anti-aliased, preserves the mean of
constant regions); upscaling uses bilinear interpolation.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import ImageLoadError
from .manifest import DatasetManifest, SampleRecord

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImageBuffer:
    pixels: np.ndarray  # (H, W, C) float64 in [0, 1]

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ImageLoadError(f"pixel array must be (H, W, 1|3), got {px.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class LoadOptions:
    crop_to_bbox: bool = False
    target_size: Optional[tuple[int, int]] = None  # (W, H)
    force_rgb: bool = False

    def __post_init__(self):
        if self.target_size is not None:
            w, h = self.target_size
            if w < 1 or h < 1:
                raise ImageLoadError(f"target_size must be >= 1, got {self.target_size}")


def _area_weights(dst: int, src: int) -> np.ndarray:
    """(dst, src) matrix whose row i averages source cells overlapping
    destination cell i; rows sum to 1."""
    w = np.zeros((dst, src))
    scale = src / dst
    for i in range(dst):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, src)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                w[i, j] = overlap / scale
    return w


def _bilinear_weights(dst: int, src: int) -> np.ndarray:
    """(dst, src) matrix sampling source cell centers bilinearly
    (half-pixel convention, edges clamped)."""
    w = np.zeros((dst, src))
    scale = src / dst
    for i in range(dst):
        pos = (i + 0.5) * scale - 0.5
        j0 = int(np.floor(pos))
        frac = pos - j0
        a = min(max(j0, 0), src - 1)
        b = min(max(j0 + 1, 0), src - 1)
        w[i, a] += 1 - frac
        w[i, b] += frac
    return w


def resize(pixels: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize (H, W, C) float pixels to (W, H). Area filter per axis when
    shrinking, bilinear when enlarging."""
    tw, th = size
    h, w = pixels.shape[:2]
    wy = _area_weights(th, h) if th <= h else _bilinear_weights(th, h)
    wx = _area_weights(tw, w) if tw <= w else _bilinear_weights(tw, w)
    return np.einsum("ij,jkc,lk->ilc", wy, pixels, wx)


def resize_nearest(pixels: np.ndarray, factor: int) -> np.ndarray:
    """Integer nearest-neighbor upscale; keeps individual pixels crisp."""
    return np.repeat(np.repeat(pixels, factor, axis=0), factor, axis=1)


def decode_image(path: str | Path) -> np.ndarray:
    """Decode a PNG/JPEG file to (H, W, C) float64 in [0, 1]; alpha dropped."""
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise ImageLoadError(f"cannot decode image {path}: {exc}") from exc

    mode = img.mode
    if mode in ("RGBA", "LA", "P", "PA", "CMYK", "YCbCr"):
        img = img.convert("RGB")
        mode = "RGB"
    arr = np.asarray(img)
    if mode == "I;16":
        arr = arr.astype(np.float64) / 65535.0
    elif arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
        if arr.max() > 1.0:
            arr = arr / arr.max()
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def load_image(
    record: SampleRecord, manifest_root: str | Path, opts: LoadOptions
) -> ImageBuffer:
    """Load one sample: decode, optionally crop to its bbox, resize, force RGB."""
    path = Path(manifest_root) / record.image
    arr = decode_image(path)

    if opts.crop_to_bbox:
        if record.bbox is None:
            warnings.warn(f"sample '{record.id}': crop requested but no bbox; using full image")
        else:
            x, y, w, h = record.bbox
            ih, iw = arr.shape[:2]
            if x + w > iw or y + h > ih:
                raise ImageLoadError(
                    f"sample '{record.id}': bbox ({x},{y},{w},{h}) exceeds image size {iw}x{ih}"
                )
            arr = arr[y : y + h, x : x + w]

    if opts.target_size is not None and opts.target_size != (arr.shape[1], arr.shape[0]):
        arr = resize(arr, opts.target_size)

    if opts.force_rgb and arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)

    return ImageBuffer(pixels=arr)


def encode_png(pixels: np.ndarray, path: str | Path) -> None:
    """Write (H, W, C) float [0,1] pixels as an 8-bit PNG (round half-up)."""
    arr = np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path, format="PNG")


def load_images(
    manifest: DatasetManifest,
    opts: LoadOptions,
    split: Optional[str] = None,
    jobs: int = 1,
):
    """Yield (record, ImageBuffer) in manifest order, decoding in parallel
    when jobs > 1 (order is preserved regardless of scheduling)."""
    records = manifest.select(split)
    if jobs <= 1:
        for rec in records:
            yield rec, load_image(rec, manifest.root, opts)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        for rec, buf in zip(
            records, pool.map(lambda r: load_image(r, manifest.root, opts), records)
        ):
            yield rec, buf
