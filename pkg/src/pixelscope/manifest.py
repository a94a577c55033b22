"""Dataset manifests: JSON-lines sample records with optional bbox/mask/metadata."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ManifestError


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image: str
    split: str = "train"
    label: Optional[str] = None
    bbox: Optional[tuple[int, int, int, int]] = None  # (x, y, w, h) in source pixels
    mask: Optional[str] = None
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetManifest:
    samples: tuple[SampleRecord, ...]
    root: Path
    class_names: Optional[tuple[str, ...]] = None

    def select(self, split: Optional[str] = None) -> list[SampleRecord]:
        if split is None:
            return list(self.samples)
        return [s for s in self.samples if s.split == split]

    def image_path(self, record: SampleRecord) -> Path:
        return self.root / record.image

    def mask_path(self, record: SampleRecord) -> Optional[Path]:
        if record.mask is None:
            return None
        return self.root / record.mask


def _parse_record(obj: dict, lineno: int) -> SampleRecord:
    if not isinstance(obj, dict):
        raise ManifestError(f"line {lineno}: record is not a JSON object")
    for key in ("id", "image"):
        if key not in obj or not isinstance(obj[key], str) or not obj[key]:
            raise ManifestError(f"line {lineno}: missing or empty '{key}' field")

    bbox = None
    if obj.get("bbox") is not None:
        raw = obj["bbox"]
        if not (isinstance(raw, (list, tuple)) and len(raw) == 4):
            raise ManifestError(f"line {lineno}: bbox must be a 4-element array")
        try:
            x, y, w, h = (int(v) for v in raw)
        except (TypeError, ValueError):
            raise ManifestError(f"line {lineno}: bbox entries must be integers")
        if x < 0 or y < 0 or w < 1 or h < 1:
            raise ManifestError(
                f"line {lineno}: bbox ({x},{y},{w},{h}) violates x,y >= 0 and w,h >= 1"
            )
        bbox = (x, y, w, h)

    metadata = obj.get("metadata") or {}
    if not isinstance(metadata, dict):
        raise ManifestError(f"line {lineno}: metadata must be an object")
    for k, v in metadata.items():
        if not k:
            raise ManifestError(f"line {lineno}: empty metadata key")
        if not isinstance(v, str):
            raise ManifestError(f"line {lineno}: metadata value for '{k}' must be a string")

    return SampleRecord(
        id=obj["id"],
        image=obj["image"],
        split=obj.get("split", "train"),
        label=obj.get("label"),
        bbox=bbox,
        mask=obj.get("mask"),
        metadata=dict(metadata),
    )


def load_manifest(path: str | Path, root: Optional[str | Path] = None) -> DatasetManifest:
    """Parse a JSONL manifest; one sample record per line.

    `root` defaults to the manifest's parent directory. Duplicate sample ids
    and invalid bboxes are rejected with the offending line number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc

    samples: list[SampleRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        rec = _parse_record(obj, lineno)
        if rec.id in seen:
            raise ManifestError(f"line {lineno}: duplicate sample id '{rec.id}'")
        seen.add(rec.id)
        samples.append(rec)

    if not samples:
        raise ManifestError(f"manifest {path} contains no records")

    return DatasetManifest(
        samples=tuple(samples),
        root=Path(root) if root is not None else path.parent,
    )


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Serialize a manifest back to JSONL (paths stay relative to its root)."""
    lines = []
    for rec in manifest.samples:
        obj: dict = {"id": rec.id, "image": rec.image, "split": rec.split}
        if rec.label is not None:
            obj["label"] = rec.label
        if rec.bbox is not None:
            obj["bbox"] = list(rec.bbox)
        if rec.mask is not None:
            obj["mask"] = rec.mask
        if rec.metadata:
            obj["metadata"] = rec.metadata
        lines.append(json.dumps(obj))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
