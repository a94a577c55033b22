"""Visual artifacts: dual-image component cards with eigenvalue bars,
component grids, colormapped heatmaps, and a self-contained HTML/JSON report.

Every render is a pure function of its inputs; identical inputs give
bitwise-identical PNG bytes.
"""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .ablation import AblationReport, report_to_json
from .components import ComponentBasis
from .datamatrix import unflatten_row
from .errors import ValidationError
from .images import ImageBuffer, resize_nearest
from .spatial import HeatmapComparison, SpatialHeatmap


@dataclass(frozen=True)
class ComponentCard:
    index: int  # 1-based
    pos_image: ImageBuffer
    neg_image: ImageBuffer
    bar_fraction: float  # lambda_i / lambda_1
    ratio: float  # explained-variance fraction


@dataclass(frozen=True)
class RenderSpec:
    top_k: int = 15
    cell_scale: int = 4
    colormap: str = "viridis-like"  # or "grayscale"
    # bar length is linear in lambda_i / lambda_1

    def __post_init__(self):
        if self.top_k < 1 or self.cell_scale < 1:
            raise ValidationError("top_k and cell_scale must be >= 1")


def _viridis_like_table() -> np.ndarray:
    """Fixed 256-entry colormap built from interpolated anchor colors;
    shipped with the artifact so renders are bit-exact across environments."""
    anchors = np.array(
        [
            [68, 1, 84], [71, 44, 122], [59, 81, 139], [44, 113, 142],
            [33, 144, 141], [39, 173, 129], [92, 200, 99], [170, 220, 50],
            [253, 231, 37],
        ],
        dtype=np.float64,
    )
    xs = np.linspace(0, 255, len(anchors))
    table = np.stack(
        [np.interp(np.arange(256), xs, anchors[:, c]) for c in range(3)], axis=1
    )
    return np.floor(table + 0.5).astype(np.uint8)


COLORMAPS: dict[str, np.ndarray] = {
    "grayscale": np.repeat(np.arange(256, dtype=np.uint8)[:, None], 3, axis=1),
    "viridis-like": _viridis_like_table(),
}

# 3x5 bitmap glyphs for grid annotations
_GLYPHS = {
    "0": ["111", "101", "101", "101", "111"],
    "1": ["010", "110", "010", "010", "111"],
    "2": ["111", "001", "111", "100", "111"],
    "3": ["111", "001", "111", "001", "111"],
    "4": ["101", "101", "111", "001", "001"],
    "5": ["111", "100", "111", "001", "111"],
    "6": ["111", "100", "111", "101", "111"],
    "7": ["111", "001", "010", "010", "010"],
    "8": ["111", "101", "111", "101", "111"],
    "9": ["111", "101", "111", "001", "111"],
    ".": ["000", "000", "000", "000", "010"],
    "%": ["101", "001", "010", "100", "101"],
    " ": ["000", "000", "000", "000", "000"],
}
_GLYPH_W, _GLYPH_H = 3, 5

_LABEL_W = 9  # two glyphs + spacing
_GAP = 2
_BAR_W = 64
_PCT_W = 6 * (_GLYPH_W + 1)  # up to "99.99%"
_CAPTION_H = _GLYPH_H + 2


def _draw_text(canvas: np.ndarray, text: str, y: int, x: int, value: float = 0.0) -> None:
    for ch in text:
        glyph = _GLYPHS.get(ch, _GLYPHS[" "])
        for gy, row in enumerate(glyph):
            for gx, bit in enumerate(row):
                if bit == "1" and 0 <= y + gy < canvas.shape[0] and 0 <= x + gx < canvas.shape[1]:
                    canvas[y + gy, x + gx] = value
        x += _GLYPH_W + 1


def render_component_card(basis: ComponentBasis, index: int, spec: RenderSpec) -> ComponentCard:
    """Split component `index` (1-based) into its positive image and its
    inverted-negative image, jointly scaled so the peak over both is 1."""
    if not 1 <= index <= basis.k:
        raise ValidationError(f"component index {index} out of range [1, {basis.k}]")
    v = unflatten_row(basis.components[index - 1], basis.shape)
    peak = np.abs(v).max()
    s = 1.0 / peak if peak > 0 else 1.0
    pos = s * np.maximum(v, 0.0)
    neg = s * np.maximum(-v, 0.0)
    lam1 = basis.eigenvalues[0]
    return ComponentCard(
        index=index,
        pos_image=ImageBuffer(pixels=resize_nearest(pos, spec.cell_scale)),
        neg_image=ImageBuffer(pixels=resize_nearest(neg, spec.cell_scale)),
        bar_fraction=float(basis.eigenvalues[index - 1] / lam1) if lam1 > 0 else 0.0,
        ratio=float(basis.explained_variance_ratio[index - 1]),
    )


def grid_dimensions(
    top_k: int, shape: tuple[int, int, int], cell_scale: int
) -> tuple[int, int]:
    """(width, height) of the component grid produced by render_component_grid."""
    h, w, _ = shape
    cw, ch = w * cell_scale, h * cell_scale
    row_h = max(ch, _GLYPH_H)
    width = _LABEL_W + _GAP + cw + _GAP + cw + _GAP + _BAR_W + _GAP + _PCT_W
    height = top_k * row_h + (top_k - 1) * _GAP + _GAP + _CAPTION_H
    return width, height


def render_component_grid(basis: ComponentBasis, spec: RenderSpec) -> ImageBuffer:
    """Rows of [index label, pos image, neg image, gray eigenvalue bar,
    explained-variance percent], capped by a cumulative-variance caption."""
    if spec.top_k > basis.k:
        raise ValidationError(f"top_k={spec.top_k} exceeds basis size {basis.k}")
    h, w, c = basis.shape
    cw, ch = w * spec.cell_scale, h * spec.cell_scale
    row_h = max(ch, _GLYPH_H)
    gw, gh = grid_dimensions(spec.top_k, basis.shape, spec.cell_scale)
    canvas = np.ones((gh, gw, 3))

    y = 0
    for i in range(1, spec.top_k + 1):
        card = render_component_card(basis, i, spec)
        _draw_text(canvas[:, :, 0], str(i), y, 0)
        _draw_text(canvas[:, :, 1], str(i), y, 0)
        _draw_text(canvas[:, :, 2], str(i), y, 0)
        x = _LABEL_W + _GAP
        for img in (card.pos_image.pixels, card.neg_image.pixels):
            tile = img if c == 3 else np.repeat(img, 3, axis=2)
            canvas[y : y + ch, x : x + cw] = tile
            x += cw + _GAP
        bar_len = int(round(card.bar_fraction * _BAR_W))
        bar_h = max(2, ch // 3)
        bar_y = y + (row_h - bar_h) // 2
        canvas[bar_y : bar_y + bar_h, x : x + bar_len] = 0.5
        x += _BAR_W + _GAP
        pct = f"{100.0 * card.ratio:.2f}%"
        for ch_i in range(3):
            _draw_text(canvas[:, :, ch_i], pct, y + (row_h - _GLYPH_H) // 2, x)
        y += row_h + _GAP

    cumulative = float(basis.explained_variance_ratio[: spec.top_k].sum())
    caption = f"{100.0 * cumulative:.2f}%"
    for ch_i in range(3):
        _draw_text(canvas[:, :, ch_i], caption, gh - _GLYPH_H - 1, 0)
    return ImageBuffer(pixels=canvas)


def render_heatmap(heatmap: SpatialHeatmap, spec: RenderSpec) -> ImageBuffer:
    """Map the normalized [0, 255] grid through the fixed colormap table."""
    table = COLORMAPS[spec.colormap]
    rgb = table[heatmap.normalized]
    return ImageBuffer(pixels=rgb.astype(np.float64) / 255.0)


def encode_png_bytes(pixels: np.ndarray) -> bytes:
    """Deterministic 8-bit PNG encoding of float [0,1] pixels."""
    arr = np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def metadata_histograms(sizes: list[tuple[int, int]], bins: int = 10) -> dict:
    """Aspect-ratio and resolution (megapixel) histograms for report JSON."""
    aspect = np.array([w / h for w, h in sizes])
    mpix = np.array([w * h / 1e6 for w, h in sizes])
    a_counts, a_edges = np.histogram(aspect, bins=bins)
    r_counts, r_edges = np.histogram(mpix, bins=bins)
    return {
        "n": len(sizes),
        "aspect_ratio": {"counts": a_counts.tolist(), "edges": a_edges.tolist()},
        "resolution_mpix": {"counts": r_counts.tolist(), "edges": r_edges.tolist()},
    }


def _img_tag(pixels: np.ndarray, alt: str) -> str:
    b64 = base64.b64encode(encode_png_bytes(pixels)).decode("ascii")
    return f'<img alt="{alt}" src="data:image/png;base64,{b64}">'


def _basis_json(basis: ComponentBasis) -> dict:
    return {
        "kind": basis.kind,
        "k": basis.k,
        "shape": list(basis.shape),
        "eigenvalues": basis.eigenvalues.tolist(),
        "explained_variance_ratio": basis.explained_variance_ratio.tolist(),
        "total_variance": basis.total_variance,
        "converged": basis.converged,
    }


def render_report(
    out_dir: str | Path,
    pca: Optional[ComponentBasis] = None,
    patch_pca: Optional[ComponentBasis] = None,
    ica: Optional[ComponentBasis] = None,
    heatmaps: Optional[list[SpatialHeatmap]] = None,
    comparison: Optional[HeatmapComparison] = None,
    averages=None,  # AverageImageSet
    ablation: Optional[AblationReport] = None,
    metadata: Optional[dict] = None,
    spec: Optional[RenderSpec] = None,
) -> tuple[Path, Path]:
    """Write a self-contained report.html (images embedded) and report.json.

    At least one analysis output must be present. The JSON layout is pinned
    by schemas/report.schema.json shipped with the package.
    """
    sections_present = [pca, patch_pca, ica, heatmaps, comparison, averages, ablation, metadata]
    if all(v is None for v in sections_present):
        raise ValidationError("report needs at least one analysis output")
    spec = spec or RenderSpec()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    doc: dict = {"version": 1}
    html = ["<!doctype html><html><head><meta charset='utf-8'>",
            "<title>dataset analysis report</title>",
            "<style>body{font-family:sans-serif;margin:2em}img{image-rendering:pixelated}</style>",
            "</head><body><h1>Dataset analysis report</h1>"]

    for key, basis, title in (
        ("pca", pca, "Principal components"),
        ("patch_pca", patch_pca, "Patch principal components"),
        ("ica", ica, "Independent components"),
    ):
        if basis is None:
            continue
        doc[key] = _basis_json(basis)
        gspec = RenderSpec(top_k=min(spec.top_k, basis.k), cell_scale=spec.cell_scale,
                           colormap=spec.colormap)
        grid = render_component_grid(basis, gspec)
        html.append(f"<h2>{title}</h2>{_img_tag(grid.pixels, key)}")

    if heatmaps:
        doc["heatmaps"] = []
        html.append("<h2>Spatial distributions</h2>")
        for hm in heatmaps:
            doc["heatmaps"].append({
                "category": hm.category,
                "split": hm.split,
                "n_samples": hm.n_samples,
                "size": list(hm.size),
                "max_count": float(hm.counts.max()),
            })
            img = render_heatmap(hm, spec)
            label = hm.category + (f" ({hm.split})" if hm.split else "")
            html.append(f"<h3>{label}, n={hm.n_samples}</h3>{_img_tag(img.pixels, label)}")

    if comparison is not None:
        doc["comparison"] = {"l1": comparison.l1, "correlation": comparison.correlation}
        html.append(
            f"<h2>Split comparison</h2><p>L1 distance {comparison.l1:.4f}, "
            f"correlation {comparison.correlation:.4f}</p>"
        )

    if averages is not None:
        doc["averages"] = {
            "group_key": averages.group_key,
            "entries": [{"value": v, "n": n} for v, _, n in averages.entries],
        }
        html.append(f"<h2>Average images by {averages.group_key}</h2>")
        for value, mean, n in averages.entries:
            html.append(f"<h3>{averages.group_key}={value}, n={n}</h3>"
                        f"{_img_tag(mean.pixels, value)}")

    if ablation is not None:
        doc["ablation"] = report_to_json(ablation)
        html.append("<h2>Channel ablation</h2><table border='1' cellpadding='4'>")
        html.append(f"<tr><td>baseline</td><td colspan='2'>{ablation.baseline_accuracy:.2%}</td></tr>")
        for c, s, a in ablation.rows:
            html.append(f"<tr><td>{c}</td><td>{s}</td><td>{a:.2%}</td></tr>")
        html.append("</table>")

    if metadata is not None:
        doc["metadata"] = metadata
        html.append(f"<h2>Metadata</h2><pre>{json.dumps(metadata, indent=2)}</pre>")

    html.append("</body></html>")
    html_path = out_dir / "report.html"
    json_path = out_dir / "report.json"
    html_path.write_text("".join(html), encoding="utf-8")
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    return html_path, json_path
