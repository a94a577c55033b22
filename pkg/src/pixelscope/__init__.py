"""Dataset-level visual analysis for image datasets.

Pixel-space PCA/ICA with dual-image component rendering, segmentation-mask
spatial heatmaps, per-group average images, and a channel-ablation harness
scored from external prediction files.
"""

__version__ = "0.1.0"

from .ablation import AblationReport, AblationSpec, ablate_channel, score_predictions
from .average import AverageImageSet, average_images
from .components import (
    ComponentBasis,
    ICAParams,
    fit_ica,
    fit_pca,
    load_basis,
    mean_and_covariance,
    project,
    reconstruct,
    save_basis,
    whiten,
)
from .datamatrix import DataMatrix, build_data_matrix, sample_patches
from .errors import ImageLoadError, ManifestError, PixelscopeError, ValidationError
from .images import ImageBuffer, LoadOptions, load_image
from .manifest import DatasetManifest, SampleRecord, load_manifest
from .render import ComponentCard, RenderSpec, render_component_card, render_component_grid, render_heatmap, render_report
from .spatial import SpatialHeatmap, aggregate_masks, compare_heatmaps, cooccurrence

__all__ = [
    "AblationReport", "AblationSpec", "ablate_channel", "score_predictions",
    "AverageImageSet", "average_images",
    "ComponentBasis", "ICAParams", "fit_ica", "fit_pca", "load_basis",
    "mean_and_covariance", "project", "reconstruct", "save_basis", "whiten",
    "DataMatrix", "build_data_matrix", "sample_patches",
    "ImageBuffer", "LoadOptions", "load_image",
    "DatasetManifest", "SampleRecord", "load_manifest",
    "ComponentCard", "RenderSpec", "render_component_card",
    "render_component_grid", "render_heatmap", "render_report",
    "SpatialHeatmap", "aggregate_masks", "compare_heatmaps", "cooccurrence",
    "PixelscopeError", "ManifestError", "ImageLoadError", "ValidationError",
]
