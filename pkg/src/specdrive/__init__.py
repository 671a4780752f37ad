"""Snapshot-mosaic hyperspectral segmentation pipeline.

Raw 16-bit mosaic frames in, segmentation masks and reports out: reflectance
cube preprocessing, centrosymmetric patch tiling, a compact encoder-decoder
segmentation network (float and fully-integer int8), overlap-averaged
reconstruction, weighted segmentation metrics, spectral separability
statistics and a latency benchmark harness.
"""

__version__ = "0.1.0"

from .mosaic import (
    MosaicLayout,
    PreprocessResult,
    band_extract,
    crop_clip,
    default_layout,
    preprocess_pipeline,
    reflectance_correct,
    translate_to_center,
)
from .tiling import PatchGrid, build_grid, extract_patches, overlap_index, reconstruct
from .model import ModelGraph, UNetConfig, build_mlp, build_unet, fold_batchnorm, forward
from .complexity import ComplexityReport, count_flops, count_params
from .weights import generate_weights, load_weights, save_weights
from .quant import (
    QuantizedGraph,
    QuantScheme,
    calibrate,
    load_qgraph,
    qforward,
    quant_report,
    quantize_graph,
    quantize_model,
    save_qgraph,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    accumulate,
    compute_metrics,
    inverse_frequency_weights,
)
from .spectral import (
    ClassStats,
    band_correlation,
    class_stats,
    jm_distance,
    select_bands,
    separability,
)
from .synth import SceneSpec, class_signatures, separating_mlp_weights, synth_scene
