"""Flattened data matrices: one row per image or patch, (y, x, c) order."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .images import LoadOptions, decode_image, load_images
from .manifest import DatasetManifest

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DataMatrix:
    data: np.ndarray  # (n, p) float64
    shape: tuple[int, int, int]  # (H, W, C) provenance of each row
    row_ids: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        h, w, c = self.shape
        if self.data.ndim != 2:
            raise ValidationError(f"data must be 2-D, got shape {self.data.shape}")
        if self.data.shape[1] != h * w * c:
            raise ValidationError(
                f"row dimension {self.data.shape[1]} != H*W*C = {h * w * c}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("data matrix contains non-finite values")
        if self.row_ids is not None and len(self.row_ids) != self.data.shape[0]:
            raise ValidationError("row_ids length does not match row count")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


def flatten_image(pixels: np.ndarray) -> np.ndarray:
    """(H, W, C) -> p-vector in row-major (y, x, c) order."""
    return pixels.reshape(-1)


def unflatten_row(row: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of flatten_image."""
    return row.reshape(shape)


def build_data_matrix(
    manifest: DatasetManifest,
    opts: LoadOptions,
    split: Optional[str] = None,
    jobs: int = 1,
) -> DataMatrix:
    """One row per selected sample. Requires opts.target_size so rows share
    one shape; mixed channel counts are rejected unless force_rgb."""
    if opts.target_size is None:
        raise ValidationError("build_data_matrix requires opts.target_size")

    rows, ids = [], []
    shape: Optional[tuple[int, int, int]] = None
    for rec, buf in load_images(manifest, opts, split=split, jobs=jobs):
        if shape is None:
            shape = buf.shape
        elif buf.shape != shape:
            raise ValidationError(
                f"sample '{rec.id}' has shape {buf.shape}, expected {shape}; "
                "use force_rgb for mixed channel counts"
            )
        rows.append(flatten_image(buf.pixels))
        ids.append(rec.id)

    if not rows:
        raise ValidationError(f"no samples selected (split={split!r})")
    assert shape is not None
    matrix = DataMatrix(data=np.stack(rows), shape=shape, row_ids=tuple(ids))

    ratio = matrix.n / matrix.p
    if ratio < 1:
        log.warning(
            "n/p ratio %.3f is below 1 (n=%d, p=%d); component estimates may be unstable",
            ratio, matrix.n, matrix.p,
        )
    return matrix


def sample_patches(
    manifest: DatasetManifest,
    patch: tuple[int, int],
    count: int,
    seed: int,
    opts: Optional[LoadOptions] = None,
) -> DataMatrix:
    """Draw `count` patches: image uniform at random, then top-left corner
    uniform over all valid positions. Deterministic per seed; images smaller
    than the patch are skipped (counted in a warning)."""
    ph, pw = patch
    if count < 1:
        raise ValidationError("count must be >= 1")
    opts = opts or LoadOptions()

    decoded = []
    skipped = 0
    for rec in manifest.samples:
        arr = decode_image(manifest.image_path(rec))
        if opts.force_rgb and arr.shape[2] == 1:
            arr = np.repeat(arr, 3, axis=2)
        if arr.shape[0] < ph or arr.shape[1] < pw:
            skipped += 1
            continue
        decoded.append(arr)
    if skipped:
        log.warning("%d images smaller than %dx%d patch were skipped", skipped, pw, ph)
    if not decoded:
        raise ValidationError(f"no image admits a {pw}x{ph} patch")

    channels = {a.shape[2] for a in decoded}
    if len(channels) > 1:
        raise ValidationError("mixed channel counts; use force_rgb")
    c = channels.pop()

    rng = np.random.default_rng(seed)
    out = np.empty((count, ph * pw * c))
    for i in range(count):
        img = decoded[rng.integers(len(decoded))]
        y = rng.integers(img.shape[0] - ph + 1)
        x = rng.integers(img.shape[1] - pw + 1)
        out[i] = img[y : y + ph, x : x + pw].reshape(-1)
    return DataMatrix(data=out, shape=(ph, pw, c))
