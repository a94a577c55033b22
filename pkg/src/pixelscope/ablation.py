"""Channel ablation: emit ablated dataset variants and score top-1 accuracy
from externally supplied prediction CSVs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .images import ImageBuffer, decode_image, encode_png
from .manifest import DatasetManifest, write_manifest

CHANNELS = ("red", "green", "blue")
STRATEGIES = ("mean_of_others", "gray")
_CHANNEL_INDEX = {"red": 0, "green": 1, "blue": 2}


@dataclass(frozen=True)
class AblationSpec:
    channel: str  # "red" | "green" | "blue"
    strategy: str  # "mean_of_others" | "gray"

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValidationError(f"unknown channel '{self.channel}'")
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy '{self.strategy}'")


@dataclass(frozen=True)
class AblationReport:
    baseline_accuracy: float
    rows: tuple[tuple[str, str, float], ...]  # (channel, strategy, accuracy)
    n_scored: int


def ablate_channel(image: ImageBuffer, spec: AblationSpec) -> ImageBuffer:
    """Replace one channel per pixel: mean_of_others uses the other two
    channels, gray the mean of all three originals. Other channels untouched."""
    if image.channels != 3:
        raise ValidationError(f"ablation needs 3 channels, got {image.channels}")
    c = _CHANNEL_INDEX[spec.channel]
    a, b = (image.pixels[:, :, i] for i in range(3) if i != c)
    px = image.pixels.copy()
    if spec.strategy == "mean_of_others":
        px[:, :, c] = (a + b) / 2.0
    else:
        # (r+g+b)/3 written relative to the ablated channel so gray pixels
        # are float-exact fixed points
        old = image.pixels[:, :, c]
        px[:, :, c] = old + ((a - old) + (b - old)) / 3.0
    return ImageBuffer(pixels=px)


def emit_ablated_dataset(
    manifest: DatasetManifest, spec: AblationSpec, outdir: str | Path
) -> DatasetManifest:
    """Re-encode every image as PNG after ablation; the returned manifest
    mirrors the input with rewritten image paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    new_records = []
    written: list[Path] = []
    try:
        for rec in manifest.samples:
            buf = ImageBuffer(pixels=decode_image(manifest.image_path(rec)))
            out_name = f"{rec.id}.png"
            encode_png(ablate_channel(buf, spec).pixels, outdir / out_name)
            written.append(outdir / out_name)
            new_records.append(replace(rec, image=out_name))
    except Exception:
        for path in written:  # partial outputs removed on failure
            path.unlink(missing_ok=True)
        raise
    out = DatasetManifest(samples=tuple(new_records), root=outdir,
                          class_names=manifest.class_names)
    write_manifest(out, outdir / "manifest.jsonl")
    return out


def _read_predictions(path: str | Path) -> dict[str, str]:
    path = Path(path)
    preds: dict[str, str] = {}
    dupes: list[str] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"sample_id", "prediction"} - set(reader.fieldnames):
            raise ValidationError(
                f"{path}: predictions CSV needs header 'sample_id,prediction'"
            )
        for row in reader:
            sid = row["sample_id"]
            if sid in preds:
                dupes.append(sid)
            preds[sid] = row["prediction"]
    if dupes:
        raise ValidationError(f"{path}: duplicate sample_id(s): {', '.join(dupes[:10])}")
    return preds


def score_predictions(manifest: DatasetManifest, predictions: str | Path) -> float:
    """Top-1 accuracy: fraction of labeled samples whose prediction matches."""
    labeled = [rec for rec in manifest.samples if rec.label is not None]
    if not labeled:
        raise ValidationError("manifest has no labeled samples")
    preds = _read_predictions(predictions)
    missing = [rec.id for rec in labeled if rec.id not in preds]
    if missing:
        raise ValidationError(
            f"{predictions}: missing predictions for: {', '.join(missing[:10])}"
        )
    hits = sum(1 for rec in labeled if preds[rec.id] == rec.label)
    return hits / len(labeled)


def ablation_report(
    baseline: str | Path,
    variants: dict[AblationSpec, str | Path],
    manifest: DatasetManifest,
) -> AblationReport:
    """Score the baseline plus every variant; rows ordered red, green, blue
    then mean_of_others before gray."""
    n_scored = sum(1 for rec in manifest.samples if rec.label is not None)
    base = score_predictions(manifest, baseline)
    order = {(c, s): (ci, si) for ci, c in enumerate(CHANNELS) for si, s in enumerate(STRATEGIES)}
    rows = []
    for spec in sorted(variants, key=lambda sp: order[(sp.channel, sp.strategy)]):
        rows.append((spec.channel, spec.strategy, score_predictions(manifest, variants[spec])))
    return AblationReport(baseline_accuracy=base, rows=tuple(rows), n_scored=n_scored)


def report_to_json(report: AblationReport) -> dict:
    return {
        "baseline": report.baseline_accuracy,
        "rows": [
            {"channel": c, "strategy": s, "accuracy": a} for c, s, a in report.rows
        ],
        "n_scored": report.n_scored,
    }


def format_report(report: AblationReport) -> str:
    """Aligned text table: one row per channel, one column per strategy."""
    by_channel: dict[str, dict[str, float]] = {}
    for c, s, a in report.rows:
        by_channel.setdefault(c, {})[s] = a
    lines = [
        f"baseline accuracy: {report.baseline_accuracy:.2%}  (n={report.n_scored})",
        f"{'Mask channel':<14}{'Mean of other channels':>24}{'Gray image':>14}",
    ]
    for c in CHANNELS:
        if c not in by_channel:
            continue
        mo = by_channel[c].get("mean_of_others")
        gr = by_channel[c].get("gray")
        lines.append(
            f"{c.capitalize():<14}"
            f"{(f'{mo:.2%}' if mo is not None else '-'):>24}"
            f"{(f'{gr:.2%}' if gr is not None else '-'):>14}"
        )
    return "\n".join(lines)
