import numpy as np
import pytest

from pixelscope.errors import ValidationError
from pixelscope.manifest import load_manifest
from pixelscope.spatial import (
    SpatialHeatmap,
    aggregate_masks,
    compare_heatmaps,
    cooccurrence,
    normalize_counts,
)

from conftest import write_manifest, write_png


def make_mask_dataset(tmp_path, masks, category="obj", splits=None):
    """masks: list of (H, W) binary arrays; one sample per mask."""
    records = []
    for i, mask in enumerate(masks):
        img = np.zeros(mask.shape + (3,), dtype=np.uint8)
        write_png(tmp_path / f"img{i}.png", img)
        write_png(tmp_path / f"mask{i}.png", (mask * 255).astype(np.uint8))
        records.append({
            "id": f"s{i}",
            "image": f"img{i}.png",
            "split": splits[i] if splits else "train",
            "mask": f"mask{i}.png",
            "metadata": {"category": category},
        })
    return load_manifest(write_manifest(tmp_path / "m.jsonl", records))


def test_single_mask_normalization(tmp_path):
    mask = np.zeros((4, 4))
    mask[1, 2] = 1
    m = make_mask_dataset(tmp_path, [mask])
    hm = aggregate_masks(m, "obj", size=(4, 4))
    assert hm.n_samples == 1
    assert hm.counts[1, 2] == pytest.approx(1.0)
    assert hm.normalized[1, 2] == 255
    assert hm.normalized.sum() == 255


def test_two_mask_fixture_values(tmp_path):
    a = np.zeros((4, 4)); a[0, 0] = 1
    b = np.zeros((4, 4)); b[0, 0] = 1; b[1, 1] = 1
    m = make_mask_dataset(tmp_path, [a, b])
    hm = aggregate_masks(m, "obj", size=(4, 4))
    assert hm.counts[0, 0] == pytest.approx(2.0)
    assert hm.counts[1, 1] == pytest.approx(1.0)
    assert hm.normalized[0, 0] == 255
    assert hm.normalized[1, 1] == 128  # round(255 * 1/2) half-up
    assert hm.normalized.max() == 255


def test_brute_force_count_oracle(tmp_path):
    rng = np.random.default_rng(0)
    masks = [(rng.random((8, 8)) > 0.6).astype(float) for _ in range(6)]
    m = make_mask_dataset(tmp_path, masks)
    hm = aggregate_masks(m, "obj", size=(8, 8))
    expected = np.zeros((8, 8))
    for mask in masks:
        expected += mask
    assert np.allclose(hm.counts, expected)


def test_full_frame_masks_uniform_255(tmp_path):
    masks = [np.ones((6, 6))] * 3
    m = make_mask_dataset(tmp_path, masks)
    hm = aggregate_masks(m, "obj", size=(4, 4))
    assert np.all(hm.normalized == 255)


def test_resize_preserves_fractional_coverage(tmp_path):
    # half-covered 4x4 mask downsized to 2x2 keeps total coverage
    mask = np.zeros((4, 4)); mask[:2] = 1
    m = make_mask_dataset(tmp_path, [mask])
    hm = aggregate_masks(m, "obj", size=(2, 2))
    assert hm.counts.sum() * (4 * 4) / (2 * 2) == pytest.approx(mask.sum())


def test_no_masks_errors(tmp_path):
    m = make_mask_dataset(tmp_path, [np.ones((4, 4))], category="cat")
    with pytest.raises(ValidationError, match="dog"):
        aggregate_masks(m, "dog", size=(4, 4))


def test_split_filter(tmp_path):
    a = np.zeros((4, 4)); a[0, 0] = 1
    b = np.zeros((4, 4)); b[3, 3] = 1
    m = make_mask_dataset(tmp_path, [a, b], splits=["train", "val"])
    hm = aggregate_masks(m, "obj", split="val", size=(4, 4))
    assert hm.n_samples == 1
    assert hm.counts[3, 3] == pytest.approx(1.0)
    assert hm.counts[0, 0] == 0


def test_mask_directory_naming_convention(tmp_path):
    # per-category masks resolved as <id>_<category>.png beside the mask path
    img = np.zeros((4, 4, 3), dtype=np.uint8)
    write_png(tmp_path / "img0.png", img)
    base = np.zeros((4, 4)); base[0, 0] = 1
    cat = np.zeros((4, 4)); cat[2, 2] = 1
    write_png(tmp_path / "mask0.png", (base * 255).astype(np.uint8))
    write_png(tmp_path / "s0_cat.png", (cat * 255).astype(np.uint8))
    m = load_manifest(write_manifest(tmp_path / "m.jsonl", [
        {"id": "s0", "image": "img0.png", "mask": "mask0.png",
         "metadata": {"category": "dog"}},
    ]))
    hm = aggregate_masks(m, "cat", size=(4, 4))
    assert hm.counts[2, 2] == pytest.approx(1.0)
    assert hm.counts[0, 0] == 0


def heatmap_from_counts(counts, category="x", split=None):
    return SpatialHeatmap(category=category, split=split, counts=counts,
                          normalized=normalize_counts(counts), n_samples=1)


def test_compare_identity():
    rng = np.random.default_rng(1)
    a = heatmap_from_counts(rng.random((5, 5)))
    cmp = compare_heatmaps(a, a)
    assert cmp.l1 == 0
    assert cmp.correlation == pytest.approx(1.0)
    assert np.all(cmp.difference == 0)


def test_compare_disjoint_is_two():
    a = np.zeros((3, 3)); a[0, 0] = 1
    b = np.zeros((3, 3)); b[2, 2] = 1
    cmp = compare_heatmaps(heatmap_from_counts(a), heatmap_from_counts(b))
    assert cmp.l1 == pytest.approx(2.0)


def test_compare_gaussians_against_direct_sum():
    ys, xs = np.mgrid[0:16, 0:16]
    g1 = np.exp(-((xs - 5) ** 2 + (ys - 5) ** 2) / 8.0)
    g2 = np.exp(-((xs - 9) ** 2 + (ys - 8) ** 2) / 10.0)
    cmp = compare_heatmaps(heatmap_from_counts(g1), heatmap_from_counts(g2))
    expected = np.abs(g1 / g1.sum() - g2 / g2.sum()).sum()  # direct summation oracle
    assert cmp.l1 == pytest.approx(expected, abs=1e-9)
    assert cmp.correlation == pytest.approx(np.corrcoef(g1.ravel(), g2.ravel())[0, 1])


def test_compare_is_symmetric():
    rng = np.random.default_rng(2)
    a = heatmap_from_counts(rng.random((4, 4)))
    b = heatmap_from_counts(rng.random((4, 4)))
    ab, ba = compare_heatmaps(a, b), compare_heatmaps(b, a)
    assert ab.l1 == pytest.approx(ba.l1)
    assert ab.correlation == pytest.approx(ba.correlation)


def test_compare_size_mismatch():
    a = heatmap_from_counts(np.ones((3, 3)))
    b = heatmap_from_counts(np.ones((4, 4)))
    with pytest.raises(ValidationError):
        compare_heatmaps(a, b)


def test_normalization_idempotent():
    rng = np.random.default_rng(3)
    counts = rng.random((6, 6)) * 10
    norm = normalize_counts(counts)
    assert np.array_equal(normalize_counts(norm.astype(float)), norm)


def test_cooccurrence_fixture(tmp_path):
    records = [
        {"id": "a", "image": "x.png", "metadata": {"categories": "cat,dog"}},
        {"id": "b", "image": "x.png", "metadata": {"categories": "cat"}},
    ]
    write_png(tmp_path / "x.png", np.zeros((2, 2, 3), dtype=np.uint8))
    m = load_manifest(write_manifest(tmp_path / "m.jsonl", records))
    co = cooccurrence(m, "categories")
    assert co.categories == ("cat", "dog")
    assert co.counts[0, 0] == 2  # cat
    assert co.counts[1, 1] == 1  # dog
    assert co.counts[0, 1] == co.counts[1, 0] == 1


def test_cooccurrence_single_category_no_pairs(tmp_path):
    write_png(tmp_path / "x.png", np.zeros((2, 2, 3), dtype=np.uint8))
    records = [{"id": f"s{i}", "image": "x.png", "label": f"c{i % 3}"} for i in range(6)]
    m = load_manifest(write_manifest(tmp_path / "m.jsonl", records))
    co = cooccurrence(m, "label")
    off = co.counts - np.diag(np.diag(co.counts))
    assert np.all(off == 0)


def test_cooccurrence_random_vs_brute_force(tmp_path):
    rng = np.random.default_rng(4)
    cats = ["a", "b", "c", "d"]
    per_sample = []
    records = []
    write_png(tmp_path / "x.png", np.zeros((2, 2, 3), dtype=np.uint8))
    for i in range(100):
        chosen = sorted({cats[j] for j in rng.integers(0, 4, size=rng.integers(1, 4))})
        per_sample.append(chosen)
        records.append({"id": f"s{i}", "image": "x.png",
                        "metadata": {"categories": ",".join(chosen)}})
    m = load_manifest(write_manifest(tmp_path / "m.jsonl", records))
    co = cooccurrence(m, "categories")
    for i, ci in enumerate(co.categories):
        for j, cj in enumerate(co.categories):
            expected = sum(1 for cs in per_sample if ci in cs and cj in cs)
            assert co.counts[i, j] == expected
