"""Command-line front end: reproducible analysis runs with machine-readable
outputs. Every run writes run.json (config, seed, versions, timing), even on
failure. Exit codes: 0 success, 1 validation error, 2 I/O error."""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import PIL

from . import __version__
from .ablation import AblationSpec, emit_ablated_dataset, score_predictions
from .average import average_images, write_average_set
from .components import ICAParams, fit_ica, fit_pca, save_basis
from .datamatrix import build_data_matrix, sample_patches
from .errors import ImageLoadError, ManifestError, PixelscopeError, ValidationError
from .images import LoadOptions, decode_image
from .manifest import load_manifest
from .render import (
    RenderSpec,
    encode_png_bytes,
    metadata_histograms,
    render_component_grid,
    render_heatmap,
    render_report,
)
from .spatial import aggregate_masks, compare_heatmaps


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return (int(w), int(h))
    except ValueError:
        raise ValidationError(f"expected WxH (e.g. 40x40), got '{text}'")


def _basis_summary(basis) -> dict:
    return {
        "kind": basis.kind,
        "eigenvalues": basis.eigenvalues.tolist(),
        "explained_variance_ratio": basis.explained_variance_ratio.tolist(),
        "total_variance": basis.total_variance,
        "converged": basis.converged,
    }


def _write_png(pixels, path: Path) -> None:
    path.write_bytes(encode_png_bytes(pixels))


def _cmd_pca(args, outdir: Path) -> list[str]:
    manifest = load_manifest(args.manifest)
    opts = LoadOptions(crop_to_bbox=args.crop_bbox, target_size=_parse_size(args.size),
                       force_rgb=args.force_rgb)
    matrix = build_data_matrix(manifest, opts, split=args.split, jobs=args.jobs)
    basis = fit_pca(matrix, args.top_k, method=args.method, seed=args.seed)
    save_basis(basis, outdir / "pca_basis.json")
    (outdir / "pca.json").write_text(
        json.dumps(_basis_summary(basis), indent=2), encoding="utf-8")
    grid = render_component_grid(basis, RenderSpec(top_k=args.top_k, cell_scale=args.cell_scale))
    _write_png(grid.pixels, outdir / "pca_grid.png")
    return ["pca_basis.json", "pca_basis.bin", "pca.json", "pca_grid.png"]


def _cmd_patch_pca(args, outdir: Path) -> list[str]:
    manifest = load_manifest(args.manifest)
    pw, ph = _parse_size(args.patch)
    matrix = sample_patches(manifest, (ph, pw), args.count, seed=args.seed,
                            opts=LoadOptions(force_rgb=args.force_rgb))
    basis = fit_pca(matrix, args.top_k, method=args.method, seed=args.seed)
    save_basis(basis, outdir / "patch_pca_basis.json")
    (outdir / "patch_pca.json").write_text(
        json.dumps(_basis_summary(basis), indent=2), encoding="utf-8")
    grid = render_component_grid(basis, RenderSpec(top_k=args.top_k, cell_scale=args.cell_scale))
    _write_png(grid.pixels, outdir / "patch_pca_grid.png")
    return ["patch_pca_basis.json", "patch_pca_basis.bin", "patch_pca.json", "patch_pca_grid.png"]


def _cmd_ica(args, outdir: Path) -> list[str]:
    manifest = load_manifest(args.manifest)
    opts = LoadOptions(crop_to_bbox=args.crop_bbox, target_size=_parse_size(args.size),
                       force_rgb=args.force_rgb)
    matrix = build_data_matrix(manifest, opts, split=args.split, jobs=args.jobs)
    params = ICAParams(k=args.k, pre_pca_k=args.pre_pca_k, tol=args.tol,
                       max_iter=args.max_iter, seed=args.seed)
    basis = fit_ica(matrix, params)
    save_basis(basis, outdir / "ica_basis.json")
    (outdir / "ica.json").write_text(
        json.dumps(_basis_summary(basis), indent=2), encoding="utf-8")
    grid = render_component_grid(basis, RenderSpec(top_k=args.k, cell_scale=args.cell_scale))
    _write_png(grid.pixels, outdir / "ica_grid.png")
    return ["ica_basis.json", "ica_basis.bin", "ica.json", "ica_grid.png"]


def _cmd_spatial(args, outdir: Path) -> list[str]:
    manifest = load_manifest(args.manifest)
    size = _parse_size(args.heat_size)
    spec = RenderSpec(colormap=args.colormap)
    outputs = []

    def emit(hm, stem):
        _write_png(render_heatmap(hm, spec).pixels, outdir / f"{stem}.png")
        (outdir / f"{stem}.json").write_text(json.dumps({
            "category": hm.category, "split": hm.split, "n_samples": hm.n_samples,
            "size": list(hm.size), "max_count": float(hm.counts.max()),
        }, indent=2), encoding="utf-8")
        outputs.extend([f"{stem}.png", f"{stem}.json"])

    if args.compare:
        split_a, split_b = args.compare
        a = aggregate_masks(manifest, args.category, split=split_a, size=size)
        b = aggregate_masks(manifest, args.category, split=split_b, size=size)
        emit(a, f"heatmap_{args.category}_{split_a}")
        emit(b, f"heatmap_{args.category}_{split_b}")
        cmp = compare_heatmaps(a, b)
        (outdir / "comparison.json").write_text(json.dumps({
            "l1": cmp.l1, "correlation": cmp.correlation}, indent=2), encoding="utf-8")
        outputs.append("comparison.json")
    else:
        hm = aggregate_masks(manifest, args.category, split=args.split, size=size)
        emit(hm, f"heatmap_{args.category}")
    return outputs


def _cmd_average(args, outdir: Path) -> list[str]:
    manifest = load_manifest(args.manifest)
    opts = LoadOptions(crop_to_bbox=args.crop_bbox, target_size=_parse_size(args.size),
                       force_rgb=args.force_rgb)
    avg = average_images(manifest, args.group_key, opts, min_n=args.min_n)
    written = write_average_set(avg, outdir / "averages")
    return [str(p.relative_to(outdir)) for p in written] + ["averages/averages.json"]


def _cmd_ablate(args, outdir: Path) -> list[str]:
    manifest = load_manifest(args.manifest)
    spec = AblationSpec(channel=args.channel, strategy=args.strategy)
    sub = outdir / f"ablated_{args.channel}_{args.strategy}"
    emit_ablated_dataset(manifest, spec, sub)
    return [f"{sub.name}/manifest.jsonl"]


def _cmd_score(args, outdir: Path) -> list[str]:
    manifest = load_manifest(args.manifest)
    acc = score_predictions(manifest, args.predictions)
    (outdir / "score.json").write_text(
        json.dumps({"accuracy": acc, "predictions": str(args.predictions)}, indent=2),
        encoding="utf-8")
    print(f"top-1 accuracy: {acc:.4f}")
    return ["score.json"]


def _cmd_report(args, outdir: Path) -> list[str]:
    manifest = load_manifest(args.manifest)
    sizes = []
    for rec in manifest.samples:
        arr = decode_image(manifest.image_path(rec))
        sizes.append((arr.shape[1], arr.shape[0]))
    meta = metadata_histograms(sizes)

    pca = None
    if args.with_pca:
        opts = LoadOptions(crop_to_bbox=args.crop_bbox, target_size=_parse_size(args.size),
                           force_rgb=args.force_rgb)
        matrix = build_data_matrix(manifest, opts, jobs=args.jobs)
        pca = fit_pca(matrix, args.top_k, method=args.method, seed=args.seed)
    heatmaps = None
    if args.category:
        heatmaps = [aggregate_masks(manifest, args.category)]
    averages = None
    if args.group_key:
        opts = LoadOptions(target_size=_parse_size(args.size))
        averages = average_images(manifest, args.group_key, opts)

    render_report(outdir, pca=pca, heatmaps=heatmaps, averages=averages,
                  metadata=meta, spec=RenderSpec(top_k=args.top_k, cell_scale=args.cell_scale))
    return ["report.html", "report.json"]


_HANDLERS = {
    "pca": _cmd_pca,
    "patch-pca": _cmd_patch_pca,
    "ica": _cmd_ica,
    "spatial": _cmd_spatial,
    "average": _cmd_average,
    "ablate": _cmd_ablate,
    "score": _cmd_score,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixelscope",
                                     description="dataset-level visual analysis toolkit")
    parser.add_argument("--config", help="JSON config supplying default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--manifest", required=False, help="JSONL dataset manifest")
        p.add_argument("--output-dir", default="out")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int,
                       default=int(os.environ.get("PIXELSCOPE_JOBS", "1")))
        p.add_argument("--force-rgb", action="store_true")
        p.add_argument("--cell-scale", type=int, default=4)

    p = sub.add_parser("pca", help="whole-image PCA with dual-image component grid")
    common(p)
    p.add_argument("--size", default="40x40", help="resize target WxH")
    p.add_argument("--crop-bbox", action="store_true")
    p.add_argument("--top-k", type=int, default=15)
    p.add_argument("--method", choices=["auto", "exact", "randomized"], default="auto")
    p.add_argument("--split")

    p = sub.add_parser("patch-pca", help="PCA on randomly sampled patches")
    common(p)
    p.add_argument("--patch", default="11x11", help="patch size WxH")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--top-k", type=int, default=15)
    p.add_argument("--method", choices=["auto", "exact", "randomized"], default="auto")

    p = sub.add_parser("ica", help="FastICA with PCA pre-reduction")
    common(p)
    p.add_argument("--size", default="40x40")
    p.add_argument("--crop-bbox", action="store_true")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--pre-pca-k", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--split")

    p = sub.add_parser("spatial", help="mask aggregation heatmaps")
    common(p)
    p.add_argument("--category", required=True)
    p.add_argument("--split")
    p.add_argument("--compare", nargs=2, metavar=("SPLIT_A", "SPLIT_B"))
    p.add_argument("--heat-size", default="640x640")
    p.add_argument("--colormap", choices=["grayscale", "viridis-like"],
                   default="viridis-like")

    p = sub.add_parser("average", help="per-group mean images")
    common(p)
    p.add_argument("--group-key", required=True)
    p.add_argument("--size", default="40x40")
    p.add_argument("--crop-bbox", action="store_true")
    p.add_argument("--min-n", type=int, default=2)

    p = sub.add_parser("ablate", help="emit channel-ablated dataset copy")
    common(p)
    p.add_argument("--channel", choices=["red", "green", "blue"], required=True)
    p.add_argument("--strategy", choices=["mean_of_others", "gray"], required=True)

    p = sub.add_parser("score", help="top-1 accuracy from a predictions CSV")
    common(p)
    p.add_argument("--predictions", required=True)

    p = sub.add_parser("report", help="HTML/JSON report with metadata histograms")
    common(p)
    p.add_argument("--with-pca", action="store_true")
    p.add_argument("--size", default="40x40")
    p.add_argument("--crop-bbox", action="store_true")
    p.add_argument("--top-k", type=int, default=15)
    p.add_argument("--method", choices=["auto", "exact", "randomized"], default="auto")
    p.add_argument("--category")
    p.add_argument("--group-key")

    return parser


def _apply_config(args: argparse.Namespace, argv: list[str]) -> None:
    """Fill option defaults from the config file: top-level keys apply to all
    subcommands, a section named after the subcommand overrides them."""
    if not args.config:
        return
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    merged = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    merged.update(cfg.get(args.command, {}))
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in merged.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and attr not in given:
            setattr(args, attr, value)


def _outdir_from_argv(argv: list[str]) -> Path:
    for i, arg in enumerate(argv):
        if arg == "--output-dir" and i + 1 < len(argv):
            return Path(argv[i + 1])
        if arg.startswith("--output-dir="):
            return Path(arg.split("=", 1)[1])
    return Path("out")


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        # run.json is written even when argument parsing fails
        outdir = _outdir_from_argv(argv)
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            (outdir / "run.json").write_text(json.dumps({
                "argv": argv, "error": "invalid arguments",
            }, indent=2), encoding="utf-8")
        except OSError:
            pass
        return 1

    started = time.time()
    run_info: dict = {
        "command": args.command,
        "argv": argv,
        "seed": getattr(args, "seed", 0),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pillow": PIL.__version__,
            "pixelscope": __version__,
        },
    }
    outdir = Path(args.output_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output dir: {exc}", file=sys.stderr)
        return 2

    code = 0
    try:
        _apply_config(args, argv)
        run_info["config"] = {
            k: v for k, v in vars(args).items() if k not in ("command", "config")
        }
        if args.manifest is None:
            raise ValidationError("--manifest is required (flag or config file)")
        run_info["outputs"] = _HANDLERS[args.command](args, outdir)
    except (ValidationError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        run_info["error"] = str(exc)
        code = 1
    except (ImageLoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        run_info["error"] = str(exc)
        code = 2
    except PixelscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        run_info["error"] = str(exc)
        code = 1

    run_info["duration_s"] = round(time.time() - started, 3)
    try:
        (outdir / "run.json").write_text(
            json.dumps(run_info, indent=2, default=str), encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write run.json: {exc}", file=sys.stderr)
        code = code or 2
    return code


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
