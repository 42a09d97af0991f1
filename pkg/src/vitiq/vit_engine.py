"""Deterministic ViT forward pass that exposes intermediate patch embeddings.

The engine runs the standard pre-norm transformer recursion

    z'_l = MSA(LN(z_{l-1})) + z_{l-1}
    z_l  = MLP(LN(z'_l))    + z'_l

and records, for every block, the patch rows of z_l taken right after the
second residual addition (before any final norm). Per-head attention
matrices are kept for the last block by default, or for all blocks on
request. A single forward pass suffices; there is no training mode, no
dropout, and no batching inside a call.

Patch flattening order is row-major over the patch grid and, inside a
patch, row-major spatially with the RGB channel innermost. Weight
orientation follows model_io: x @ W.T + b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_math as tm
from .errors import ShapeError
from .model_io import VitModel, validate_model

F32 = np.float32


@dataclass
class ImageTensor:
    """Preprocessed square RGB image, float32 values in [-1, 1]."""

    data: np.ndarray  # (size, size, 3) float32

    @property
    def size(self) -> int:
        return self.data.shape[0]


@dataclass
class BlockTaps:
    """Intermediate state captured during one forward pass.

    per_block_patch_embeddings holds L arrays of shape (N, D) with the class
    token already stripped. last_block_attention holds H per-head matrices
    over the full token sequence (class token included when present).
    all_attention is populated only when the forward pass is asked to keep
    every block's attention.
    """

    per_block_patch_embeddings: list[np.ndarray]
    last_block_attention: list[np.ndarray]
    final_feature: np.ndarray
    all_attention: list[list[np.ndarray]] | None = None

    @property
    def num_blocks(self) -> int:
        return len(self.per_block_patch_embeddings)


def preprocess(raw: np.ndarray) -> ImageTensor:
    """Map a uint8 RGB image to float32 via x -> (x/255 - 0.5) / 0.5."""
    arr = np.asarray(raw)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) RGB image, got shape {arr.shape}")
    if arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"expected a square image, got {arr.shape[0]}x{arr.shape[1]}")
    if arr.dtype != np.uint8:
        raise ShapeError(f"expected uint8 pixels, got {arr.dtype}")
    scaled = (arr.astype(F32) / F32(255.0) - F32(0.5)) / F32(0.5)
    return ImageTensor(data=scaled)


def extract_patches(img: ImageTensor, patch_size: int) -> np.ndarray:
    """Flatten non-overlapping patches to rows of length patch_size^2 * 3."""
    size = img.size
    if size % patch_size != 0:
        raise ShapeError(f"image size {size} not divisible by patch size {patch_size}")
    side = size // patch_size
    # (side, P, side, P, 3) -> (side, side, P, P, 3); C-order reshape keeps
    # rows spatially row-major with the channel innermost.
    grid = img.data.reshape(side, patch_size, side, patch_size, 3).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(grid).reshape(side * side, patch_size * patch_size * 3)


def patchify_embed(img: ImageTensor, model: VitModel) -> np.ndarray:
    """Project patches, prepend the class token if any, add pos_embed."""
    cfg = model.config
    if img.size != cfg.image_size:
        raise ShapeError(f"image is {img.size}px but the model expects {cfg.image_size}px")
    patches = extract_patches(img, cfg.patch_size)
    z0 = tm.matmul(patches, model.tensor("patch_embed.weight").T) + model.tensor("patch_embed.bias")
    if cfg.has_class_token:
        z0 = np.vstack([model.tensor("class_token")[None, :], z0])
    return (z0 + model.tensor("pos_embed")).astype(F32)


def attention_block(x: np.ndarray, block_index: int, model: VitModel):
    """One transformer block. Returns (output, per-head attention list)."""
    cfg = model.config
    d, heads, dh = cfg.embed_dim, cfg.num_heads, cfg.head_dim
    p = f"block{block_index}."

    h = tm.layer_norm(x, model.tensor(p + "ln1.gamma"), model.tensor(p + "ln1.beta"))
    qkv = tm.matmul(h, model.tensor(p + "qkv.weight").T) + model.tensor(p + "qkv.bias")
    q, k, v = qkv[:, :d], qkv[:, d:2 * d], qkv[:, 2 * d:]

    scale = F32(1.0) / np.sqrt(F32(dh))
    attn_per_head = []
    head_outputs = []
    for head in range(heads):
        sl = slice(head * dh, (head + 1) * dh)
        logits = tm.matmul(q[:, sl], k[:, sl].T) * scale
        attn = tm.softmax_rows(logits)
        attn_per_head.append(attn)
        head_outputs.append(tm.matmul(attn, v[:, sl]))
    concat = np.concatenate(head_outputs, axis=1)
    msa = tm.matmul(concat, model.tensor(p + "attn_out.weight").T) + model.tensor(p + "attn_out.bias")
    z_mid = (x + msa).astype(F32)

    h2 = tm.layer_norm(z_mid, model.tensor(p + "ln2.gamma"), model.tensor(p + "ln2.beta"))
    hidden = tm.gelu(tm.matmul(h2, model.tensor(p + "mlp.fc1.weight").T) + model.tensor(p + "mlp.fc1.bias"))
    mlp = tm.matmul(hidden, model.tensor(p + "mlp.fc2.weight").T) + model.tensor(p + "mlp.fc2.bias")
    return (z_mid + mlp).astype(F32), attn_per_head


def forward_with_taps(img: ImageTensor, model: VitModel,
                      keep_all_attention: bool = False) -> BlockTaps:
    """Run all blocks, recording post-block patch embeddings.

    The recorded embeddings are the block outputs after the second residual,
    before the final norm; the class token row is stripped from taps but
    kept inside the attention matrices. The final feature applies the final
    layer norm and then pools per config.feature_pooling.
    """
    violations = validate_model(model)
    if violations:
        raise ShapeError("model failed validation: " + "; ".join(violations))
    cfg = model.config
    cls_rows = 1 if cfg.has_class_token else 0

    z = patchify_embed(img, model)
    taps: list[np.ndarray] = []
    last_attention: list[np.ndarray] = []
    all_attention: list[list[np.ndarray]] = []
    for block in range(cfg.num_blocks):
        z, attn = attention_block(z, block, model)
        taps.append(z[cls_rows:].copy())
        if keep_all_attention:
            all_attention.append(attn)
        if block == cfg.num_blocks - 1:
            last_attention = attn

    final = tm.layer_norm(z, model.tensor("final_norm.gamma"), model.tensor("final_norm.beta"))
    if cfg.feature_pooling == "class_token":
        feature = final[0].copy()
    else:
        feature = final[cls_rows:].mean(axis=0).astype(F32)

    return BlockTaps(
        per_block_patch_embeddings=taps,
        last_block_attention=last_attention,
        final_feature=feature,
        all_attention=all_attention if keep_all_attention else None,
    )
