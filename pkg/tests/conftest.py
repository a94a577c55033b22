import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def write_png(path: Path, arr: np.ndarray) -> None:
    """arr: (H, W) or (H, W, 3) uint8."""
    Image.fromarray(arr).save(path, format="PNG")


def write_manifest(path: Path, records: list[dict]) -> Path:
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def toy_dataset(tmp_path):
    """Five 8x8 RGB images with labels and splits, one with a bbox."""
    rng = np.random.default_rng(7)
    records = []
    for i in range(5):
        arr = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        name = f"img{i}.png"
        write_png(tmp_path / name, arr)
        rec = {
            "id": f"s{i}",
            "image": name,
            "split": "train" if i < 3 else "val",
            "label": "cat" if i % 2 == 0 else "dog",
        }
        if i == 0:
            rec["bbox"] = [1, 2, 4, 3]
        records.append(rec)
    manifest_path = write_manifest(tmp_path / "manifest.jsonl", records)
    return manifest_path
