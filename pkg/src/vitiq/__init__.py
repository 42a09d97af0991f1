"""Training-free face image quality from patch-embedding stability.

A small ViT inference engine taps patch embeddings after every block of a
single forward pass; the quality score of an image is a monotone map of how
far its patch embeddings travel (after L2 normalization) between
consecutive blocks, aggregated over patches either uniformly or by
last-block attention mass. Around that core: a binary weight container, a
deterministic degradation generator, and a verification-error evaluation
harness (FMR-anchored thresholds, error-versus-discard curves, AUC/pAUC).
"""

__version__ = "0.1.0"

from .errors import ContractError, FormatError, ShapeError, ValidationError
from .tensor_math import (
    gelu,
    l2_normalize_rows,
    layer_norm,
    matmul,
    softmax_rows,
    tensor,
)
from .model_io import (
    VitConfig,
    VitModel,
    expected_tensor_shapes,
    random_model,
    read_model,
    validate_model,
    write_model,
)
from .vit_engine import (
    BlockTaps,
    ImageTensor,
    attention_block,
    extract_patches,
    forward_with_taps,
    patchify_embed,
    preprocess,
)
from .quality_core import (
    AGGREGATION_MODES,
    QualityConfig,
    QualityResult,
    aggregate,
    attention_weights,
    cross_block_distances,
    mean_patch_distance,
    patch_quality,
    score_from_taps,
    score_image,
)
from .degradation import (
    DEGRADATION_KINDS,
    NUM_LEVELS,
    DegradationSpec,
    apply,
    derive_seed,
    make_quality_groups,
    normal_draws,
    read_ppm,
    splitmix64,
    write_group_manifest,
    write_ppm,
)
from .evaluation import (
    EdcCurve,
    GroupStats,
    VerificationPair,
    auc,
    cosine_similarity,
    default_reject_grid,
    edc_curve,
    group_distance_stats,
    join_qualities,
    pauc,
    read_pairs,
    read_qualities,
    spearman,
    threshold_at_fmr,
    write_edc_curve,
)

__all__ = [
    "__version__",
    # errors
    "ContractError", "FormatError", "ShapeError", "ValidationError",
    # tensor math
    "tensor", "matmul", "softmax_rows", "layer_norm", "gelu", "l2_normalize_rows",
    # model container
    "VitConfig", "VitModel", "expected_tensor_shapes", "validate_model",
    "read_model", "write_model", "random_model",
    # engine
    "ImageTensor", "BlockTaps", "preprocess", "extract_patches",
    "patchify_embed", "attention_block", "forward_with_taps",
    # quality
    "AGGREGATION_MODES", "QualityConfig", "QualityResult",
    "cross_block_distances", "mean_patch_distance", "patch_quality",
    "attention_weights", "aggregate", "score_from_taps", "score_image",
    # degradations
    "DEGRADATION_KINDS", "NUM_LEVELS", "DegradationSpec", "apply",
    "splitmix64", "normal_draws", "derive_seed", "read_ppm", "write_ppm",
    "make_quality_groups", "write_group_manifest",
    # evaluation
    "VerificationPair", "EdcCurve", "GroupStats", "cosine_similarity",
    "threshold_at_fmr", "edc_curve", "auc", "pauc", "default_reject_grid",
    "spearman", "group_distance_stats", "read_pairs", "read_qualities",
    "join_qualities", "write_edc_curve",
]
