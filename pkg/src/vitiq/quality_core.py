"""Cross-block patch stability scoring.

An image's quality is read off a single forward pass: patch embeddings from
consecutive blocks are L2-normalized, their Euclidean distances averaged
per patch, mapped through a decreasing sigmoid into (0, 1], and aggregated
to one score either uniformly or weighted by how much each patch is
attended to in the last block.

Stable trajectories (small distances) score high; erratic ones score low.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_math as tm
from .errors import ContractError
from .model_io import VitModel
from .vit_engine import BlockTaps, ImageTensor, forward_with_taps

F32 = np.float32

AGGREGATION_MODES = ("uniform", "attention_last", "attention_all")

DEFAULT_ALPHA = 1.0
DEFAULT_EPS_NORM = 1e-12

# Ablations favour a 12-block prefix with last-block attention weighting.
DEFAULT_BLOCK_PREFIX = 12


@dataclass(frozen=True)
class QualityConfig:
    """Which blocks to compare and how to aggregate patch qualities.

    block_set must be consecutive indices (step exactly 1) of length >= 2;
    non-consecutive selections are not meaningful for a trajectory measure
    and are rejected. alpha scales the distance-to-quality sigmoid; it is
    deliberately exposed rather than tuned, since it only bends aggregation
    curvature.
    """

    block_set: tuple[int, ...]
    alpha: float = DEFAULT_ALPHA
    aggregation: str = "attention_last"
    eps_norm: float = DEFAULT_EPS_NORM

    def __post_init__(self):
        blocks = tuple(int(b) for b in self.block_set)
        object.__setattr__(self, "block_set", blocks)
        if len(blocks) < 2:
            raise ContractError("block_set needs at least two blocks")
        if blocks[0] < 0:
            raise ContractError(f"negative block index in {blocks}")
        if any(b - a != 1 for a, b in zip(blocks, blocks[1:])):
            raise ContractError(f"block_set must be consecutive, got {blocks}")
        if not self.alpha > 0:
            raise ContractError(f"alpha must be positive, got {self.alpha}")
        if self.aggregation not in AGGREGATION_MODES:
            raise ContractError(f"unknown aggregation {self.aggregation!r}")
        if not self.eps_norm > 0:
            raise ContractError(f"eps_norm must be positive, got {self.eps_norm}")

    @classmethod
    def default_for(cls, num_blocks: int, **overrides) -> "QualityConfig":
        """Prefix of min(num_blocks, 12) blocks, attention-weighted."""
        prefix = min(num_blocks, DEFAULT_BLOCK_PREFIX)
        return cls(block_set=tuple(range(prefix)), **overrides)


@dataclass
class QualityResult:
    """Per-patch diagnostics plus the scalar image score."""

    per_patch_mean_distance: np.ndarray  # (N,)
    per_patch_quality: np.ndarray        # (N,)
    patch_weights: np.ndarray            # (N,), sums to 1
    image_score: float


def cross_block_distances(taps: BlockTaps, cfg: QualityConfig) -> np.ndarray:
    """Distance matrix of shape (T-1, N) between consecutive selected blocks.

    Entry (i, p) is the Euclidean distance between the eps-guarded
    L2-normalized embeddings of patch p at block_set[i] and block_set[i+1].
    Unit-vector distances live in [0, 2]; float32 rounding can spill a few
    ulps past 2, which is clipped away.
    """
    available = taps.num_blocks
    for b in cfg.block_set:
        if b >= available:
            raise IndexError(f"block index {b} out of range, model has {available} blocks")
    normalized = [
        tm.l2_normalize_rows(taps.per_block_patch_embeddings[b], cfg.eps_norm)
        for b in cfg.block_set
    ]
    rows = []
    for a, b in zip(normalized, normalized[1:]):
        diff = a - b
        rows.append(np.sqrt((diff * diff).sum(axis=1)))
    return np.clip(np.stack(rows).astype(F32), 0.0, 2.0)


def mean_patch_distance(distances: np.ndarray) -> np.ndarray:
    """Average each patch's distances over the block transitions."""
    distances = np.asarray(distances)
    if distances.ndim != 2 or distances.shape[0] < 1 or distances.shape[1] < 1:
        raise ContractError(f"expected a non-empty (T-1, N) matrix, got shape {distances.shape}")
    return distances.mean(axis=0).astype(F32)


def patch_quality(d_bar: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Map mean distances to qualities via q = 2 / (1 + exp(alpha * d)).

    Strictly decreasing in d; d = 0 maps to exactly 1.
    """
    if not alpha > 0:
        raise ContractError(f"alpha must be positive, got {alpha}")
    d = np.asarray(d_bar, dtype=F32)
    return (F32(2.0) / (F32(1.0) + np.exp(F32(alpha) * d))).astype(F32)


def _column_mass(attn_heads: list[np.ndarray], num_patches: int) -> np.ndarray:
    """Sum attention columns over heads and queries, class token excluded."""
    mass = np.zeros(num_patches, dtype=np.float64)
    for attn in attn_heads:
        cls_rows = attn.shape[0] - num_patches
        patch_block = attn[cls_rows:, cls_rows:]  # drop class-token row and column
        mass += patch_block.sum(axis=0, dtype=np.float64)
    return mass


def attention_weights(taps: BlockTaps, mode: str = "attention_last") -> np.ndarray:
    """Normalized per-patch attention mass, summing to 1.

    attention_last uses the last block's heads only. attention_all averages
    the per-block normalized column masses over every block with equal
    weight, which requires the forward pass to have kept all attention.
    """
    num_patches = taps.per_block_patch_embeddings[0].shape[0]
    if mode == "attention_last":
        if not taps.last_block_attention:
            raise ContractError("taps carry no last-block attention")
        mass = _column_mass(taps.last_block_attention, num_patches)
        return (mass / mass.sum()).astype(F32)
    if mode == "attention_all":
        if not taps.all_attention:
            raise ContractError("taps carry no per-block attention; "
                                "run the forward pass with keep_all_attention")
        acc = np.zeros(num_patches, dtype=np.float64)
        for attn_heads in taps.all_attention:
            mass = _column_mass(attn_heads, num_patches)
            acc += mass / mass.sum()
        acc /= len(taps.all_attention)
        return acc.astype(F32)
    raise ContractError(f"unknown attention weighting mode {mode!r}")


def aggregate(q: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Image score: plain mean of q, or weights . q when weights are given."""
    q = np.asarray(q, dtype=F32)
    if weights is None:
        return float(q.mean(dtype=np.float64))
    weights = np.asarray(weights, dtype=F32)
    if weights.shape != q.shape:
        raise ContractError(f"weights shape {weights.shape} != quality shape {q.shape}")
    total = float(weights.sum(dtype=np.float64))
    if abs(total - 1.0) > 1e-4:
        raise ContractError(f"weights sum to {total}, expected 1 within 1e-4")
    return float(np.dot(weights.astype(np.float64), q.astype(np.float64)))


def score_from_taps(taps: BlockTaps, cfg: QualityConfig) -> QualityResult:
    """Quality pipeline given already-captured taps."""
    distances = cross_block_distances(taps, cfg)
    d_bar = mean_patch_distance(distances)
    q = patch_quality(d_bar, cfg.alpha)
    if cfg.aggregation == "uniform":
        n = q.shape[0]
        weights = np.full(n, 1.0 / n, dtype=F32)
        score = aggregate(q)
    else:
        weights = attention_weights(taps, cfg.aggregation)
        score = aggregate(q, weights)
    return QualityResult(
        per_patch_mean_distance=d_bar,
        per_patch_quality=q,
        patch_weights=weights,
        image_score=score,
    )


def score_image(img: ImageTensor, model: VitModel, cfg: QualityConfig) -> QualityResult:
    """Forward pass plus the full distance/quality/aggregation pipeline."""
    taps = forward_with_taps(img, model,
                             keep_all_attention=cfg.aggregation == "attention_all")
    return score_from_taps(taps, cfg)
