"""Spatial distribution of object categories: mask aggregation heatmaps,
split comparison, and category co-occurrence counts."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ValidationError
from .images import decode_image, resize
from .manifest import DatasetManifest, SampleRecord

log = logging.getLogger(__name__)

DEFAULT_HEATMAP_SIZE = (640, 640)


@dataclass(frozen=True)
class SpatialHeatmap:
    category: str
    counts: np.ndarray  # (H, W) pre-normalization sums
    normalized: np.ndarray  # (H, W) uint8 in [0, 255], max is 255 if any count > 0
    n_samples: int
    split: Optional[str] = None

    @property
    def size(self) -> tuple[int, int]:
        return (self.counts.shape[1], self.counts.shape[0])


@dataclass(frozen=True)
class HeatmapComparison:
    l1: float  # L1 between sum-normalized grids, in [0, 2]
    correlation: float  # Pearson correlation of the count grids
    difference: np.ndarray  # signed a - b of sum-normalized grids


@dataclass(frozen=True)
class CooccurrenceMatrix:
    categories: tuple[str, ...]
    counts: np.ndarray  # symmetric; diagonal = per-category sample counts


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """Map counts to [0, 255] with max -> 255, rounding half-up."""
    peak = counts.max()
    if peak <= 0:
        return np.zeros_like(counts, dtype=np.uint8)
    return np.floor(255.0 * counts / peak + 0.5).astype(np.uint8)


def _category_mask_path(
    manifest: DatasetManifest, record: SampleRecord, category: str
) -> Optional[Path]:
    """Resolve the mask file for a category: either the record's mask field
    (when its metadata category matches) or `<id>_<category>.png` next to it."""
    if record.mask is None:
        return None
    path = manifest.root / record.mask
    if record.metadata.get("category") == category:
        return path if path.exists() else None
    candidate = path.parent / f"{record.id}_{category}.png"
    return candidate if candidate.exists() else None


def aggregate_masks(
    manifest: DatasetManifest,
    category: str,
    split: Optional[str] = None,
    size: tuple[int, int] = DEFAULT_HEATMAP_SIZE,
) -> SpatialHeatmap:
    """Binarize each category mask (pixel > 0), resize with area averaging
    (fractional coverage preserved), sum, and normalize to [0, 255]."""
    w, h = size
    counts = np.zeros((h, w))
    n = 0
    for rec in manifest.select(split):
        path = _category_mask_path(manifest, rec, category)
        if path is None:
            continue
        mask = decode_image(path)
        binary = (mask.max(axis=2) > 0).astype(np.float64)[:, :, None]
        counts += resize(binary, size)[:, :, 0]
        n += 1
    if n == 0:
        raise ValidationError(f"no masks found for category '{category}' (split={split!r})")
    return SpatialHeatmap(
        category=category,
        split=split,
        counts=counts,
        normalized=normalize_counts(counts),
        n_samples=n,
    )


def compare_heatmaps(a: SpatialHeatmap, b: SpatialHeatmap) -> HeatmapComparison:
    """L1 distance between sum-normalized count grids plus Pearson correlation."""
    if a.counts.shape != b.counts.shape:
        raise ValidationError(f"heatmap sizes differ: {a.size} vs {b.size}")
    pa = a.counts / a.counts.sum() if a.counts.sum() > 0 else a.counts
    pb = b.counts / b.counts.sum() if b.counts.sum() > 0 else b.counts
    fa, fb = a.counts.reshape(-1), b.counts.reshape(-1)
    if fa.std() == 0 or fb.std() == 0:
        corr = 1.0 if np.array_equal(fa, fb) else 0.0
    else:
        corr = float(np.corrcoef(fa, fb)[0, 1])
    return HeatmapComparison(
        l1=float(np.abs(pa - pb).sum()),
        correlation=corr,
        difference=pa - pb,
    )


def sample_categories(record: SampleRecord, category_key: str = "label") -> list[str]:
    """Categories a sample carries: its label, or a comma-separated metadata list."""
    if category_key == "label":
        return [record.label] if record.label else []
    raw = record.metadata.get(category_key)
    if not raw:
        return []
    return sorted({c.strip() for c in raw.split(",") if c.strip()})


def cooccurrence(
    manifest: DatasetManifest, category_key: str = "label"
) -> CooccurrenceMatrix:
    """Symmetric pair counts; entry (i, j) is how many samples contain both
    categories, the diagonal the per-category sample count."""
    per_sample = [sample_categories(rec, category_key) for rec in manifest.samples]
    cats = sorted({c for cs in per_sample for c in cs})
    if not cats:
        raise ValidationError(f"no categorized samples for key '{category_key}'")
    index = {c: i for i, c in enumerate(cats)}
    counts = np.zeros((len(cats), len(cats)), dtype=np.int64)
    for cs in per_sample:
        idx = [index[c] for c in cs]
        for i in idx:
            for j in idx:
                counts[i, j] += 1
    return CooccurrenceMatrix(categories=tuple(cats), counts=counts)
