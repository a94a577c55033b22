"""Per-group mean images (per class or per metadata value such as pose)."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .images import ImageBuffer, LoadOptions, encode_png, load_image
from .manifest import DatasetManifest

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AverageImageSet:
    group_key: str
    entries: tuple[tuple[str, ImageBuffer, int], ...]  # (value, mean, n), n descending
    target_size: tuple[int, int]


def average_images(
    manifest: DatasetManifest,
    group_key: str,
    opts: LoadOptions,
    min_n: int = 2,
) -> AverageImageSet:
    """Pixel-wise mean of loaded images per group value.

    group_key "label" groups by sample label, anything else by that metadata
    key. Groups smaller than min_n are dropped with a warning; samples
    missing the key are skipped and counted.
    """
    if opts.target_size is None:
        raise ValidationError("average_images requires opts.target_size")

    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    skipped = 0
    for rec in manifest.samples:
        value = rec.label if group_key == "label" else rec.metadata.get(group_key)
        if value is None:
            skipped += 1
            continue
        buf = load_image(rec, manifest.root, opts)
        if value in sums:
            sums[value] = sums[value] + buf.pixels
            counts[value] += 1
        else:
            sums[value] = buf.pixels.copy()
            counts[value] = 1
    if skipped:
        log.warning("%d samples missing key '%s' were skipped", skipped, group_key)
    if not sums:
        raise ValidationError(f"no samples carry group key '{group_key}'")

    entries = []
    for value in sorted(sums, key=lambda v: (-counts[v], v)):
        n = counts[value]
        if n < min_n:
            log.warning("group '%s=%s' has only %d samples (< %d); omitted",
                        group_key, value, n, min_n)
            continue
        entries.append((value, ImageBuffer(pixels=sums[value] / n), n))
    if not entries:
        raise ValidationError(f"all groups under key '{group_key}' fall below min_n={min_n}")
    return AverageImageSet(
        group_key=group_key, entries=tuple(entries), target_size=opts.target_size
    )


def write_average_set(avg: AverageImageSet, outdir: str | Path) -> list[Path]:
    """One PNG per group, `<key>=<value>_n<count>.png`, plus a JSON index."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    index = []
    for value, mean, n in avg.entries:
        name = f"{avg.group_key}={value}_n{n}.png"
        encode_png(mean.pixels, outdir / name)
        written.append(outdir / name)
        index.append({"value": value, "n": n, "file": name})
    (outdir / "averages.json").write_text(
        json.dumps({"group_key": avg.group_key, "entries": index}, indent=2),
        encoding="utf-8",
    )
    return written
