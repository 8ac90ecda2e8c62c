"""Point-cloud pseudo-label toolkit.

Multi-view logit back-projection, class-aware and geometry-aware label
refinement, iterative self-training label propagation, segmentation metrics,
and a deterministic synthetic-scene substrate for desk-scale verification.
"""

from .labels import UNLABELED, LabelField
from .metrics import (
    ConfidenceBin,
    ConfusionMatrix,
    confidence_bins,
    confusion,
    labeled_rate,
    metrics_report,
    miou,
)
from .ply import load_labeled_ply, load_ply, save_ply
from .pointcloud import PointCloud, SpatialIndex, build_index, estimate_normals
from .projection import (
    MASKED_LOGIT,
    CameraView,
    TextEmbeddings,
    aggregate_views,
    apply_scene_mask,
    compute_logits,
    project_point,
    pseudo_labels_from_logits,
    pseudo_labels_from_views,
    rank_to_pseudo_labels,
)
from .refine import RefineParams, calr, galr, refine_pipeline
from .stlp import (
    KnnClassifier,
    PointClassifier,
    StlpConfig,
    infer,
    label_update,
    stlp_round,
    stlp_run,
)
from .superpoint import SuperpointPartition, oversegment, partition_stats
from .synth import (
    LogitNoiseSpec,
    SceneSpec,
    ViewRingSpec,
    corrupt_logits,
    generate_scene,
    one_hot,
    render_views,
)
from .benchmark import (
    BENCHMARK_PRESETS,
    STANDARD_SEEDS,
    BenchmarkPreset,
    SuperpointParams,
    eval_scan,
    get_benchmark,
    label_scan,
    run_benchmark,
)

__version__ = "0.1.0"

__all__ = [
    "UNLABELED", "LabelField",
    "PointCloud", "SpatialIndex", "build_index", "estimate_normals",
    "load_ply", "load_labeled_ply", "save_ply",
    "MASKED_LOGIT", "CameraView", "TextEmbeddings",
    "project_point", "aggregate_views", "compute_logits",
    "apply_scene_mask", "rank_to_pseudo_labels",
    "pseudo_labels_from_logits", "pseudo_labels_from_views",
    "SuperpointPartition", "oversegment", "partition_stats",
    "RefineParams", "calr", "galr", "refine_pipeline",
    "PointClassifier", "KnnClassifier", "StlpConfig",
    "label_update", "stlp_round", "stlp_run", "infer",
    "ConfusionMatrix", "ConfidenceBin", "confusion", "miou",
    "confidence_bins", "labeled_rate", "metrics_report",
    "SceneSpec", "LogitNoiseSpec", "ViewRingSpec",
    "generate_scene", "corrupt_logits", "render_views", "one_hot",
    "BenchmarkPreset", "SuperpointParams", "BENCHMARK_PRESETS",
    "STANDARD_SEEDS", "get_benchmark", "label_scan", "eval_scan",
    "run_benchmark",
    "__version__",
]
