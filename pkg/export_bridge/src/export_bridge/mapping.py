"""Checkpoint name mapping onto the engine's tensor inventory.

Source names follow the timm ViT convention. Every source tensor must map;
anything unrecognized is collected and reported in one exhaustive error, so
a mismatched checkpoint fails loudly rather than exporting a partial model.

Layout transforms owned here:

  patch_embed.proj.weight   conv (D, 3, P, P) -> (D, P*P*3), spatial
                            row-major with channels innermost, matching the
                            engine's patch flattening
  pos_embed                 (1, T, D) -> (T, D)
  cls_token                 (1, 1, D) -> (D,)
  attn.q/k/v separate       row-stacked into fused qkv, q rows first
"""
import json
import re
from pathlib import Path

import numpy as np
import torch

from vitiq import VitConfig, VitModel, validate_model

from .errors import MappingError

# direct renames: source suffix -> target suffix, per block
_BLOCK_RULES = (
    ("norm1.weight", "ln1.gamma"),
    ("norm1.bias", "ln1.beta"),
    ("attn.qkv.weight", "qkv.weight"),
    ("attn.qkv.bias", "qkv.bias"),
    ("attn.proj.weight", "attn_out.weight"),
    ("attn.proj.bias", "attn_out.bias"),
    ("norm2.weight", "ln2.gamma"),
    ("norm2.bias", "ln2.beta"),
    ("mlp.fc1.weight", "mlp.fc1.weight"),
    ("mlp.fc1.bias", "mlp.fc1.bias"),
    ("mlp.fc2.weight", "mlp.fc2.weight"),
    ("mlp.fc2.bias", "mlp.fc2.bias"),
)
_BLOCK_KEY = re.compile(r"^blocks\.(\d+)\.(.+)$")
_SPLIT_QKV = re.compile(r"^attn\.([qkv])\.(weight|bias)$")


def _to_f32(value: torch.Tensor) -> np.ndarray:
    return value.detach().cpu().to(torch.float32).numpy()


def flatten_conv_patch_weight(weight: np.ndarray) -> np.ndarray:
    d, c, ph, pw = weight.shape
    return np.ascontiguousarray(weight.transpose(0, 2, 3, 1).reshape(d, ph * pw * c))


def map_checkpoint(state: dict, config: VitConfig):
    """Returns (tensors, mapping) where mapping records source -> target names."""
    tensors: dict[str, np.ndarray] = {}
    mapping: dict[str, str] = {}
    split_qkv: dict[str, np.ndarray] = {}  # "block3.qkv.weight.q" -> array
    unmapped: list[str] = []

    def put(src: str, dst: str, value: np.ndarray):
        if dst in tensors:
            raise MappingError(f"{src}: target {dst} already filled; "
                               "checkpoint mixes fused and separate q/k/v")
        tensors[dst] = value
        mapping[src] = dst

    for src in sorted(state):
        value = _to_f32(state[src])
        if src == "patch_embed.proj.weight":
            if value.ndim == 4:
                value = flatten_conv_patch_weight(value)
            put(src, "patch_embed.weight", value)
        elif src == "patch_embed.proj.bias":
            put(src, "patch_embed.bias", value)
        elif src == "cls_token":
            put(src, "class_token", value.reshape(-1))
        elif src == "pos_embed":
            put(src, "pos_embed", value.reshape(value.shape[-2], value.shape[-1]))
        elif src == "norm.weight":
            put(src, "final_norm.gamma", value)
        elif src == "norm.bias":
            put(src, "final_norm.beta", value)
        else:
            m = _BLOCK_KEY.match(src)
            if not m:
                unmapped.append(src)
                continue
            block_ix, rest = int(m.group(1)), m.group(2)
            prefix = f"block{block_ix}."
            for source_suffix, target_suffix in _BLOCK_RULES:
                if rest == source_suffix:
                    put(src, prefix + target_suffix, value)
                    break
            else:
                sm = _SPLIT_QKV.match(rest)
                if sm:
                    which, kind = sm.group(1), sm.group(2)
                    split_qkv[f"{prefix}qkv.{kind}.{which}"] = value
                    mapping[src] = f"{prefix}qkv.{kind} (row slice {which})"
                else:
                    unmapped.append(src)

    if unmapped:
        raise MappingError(
            "unmapped checkpoint tensors: " + ", ".join(sorted(unmapped)))

    _fuse_split_qkv(split_qkv, tensors)
    return tensors, mapping


def _fuse_split_qkv(split_qkv: dict, tensors: dict) -> None:
    stems = sorted({key.rsplit(".", 1)[0] for key in split_qkv})
    for stem in stems:
        parts = []
        for which in "qkv":
            try:
                parts.append(split_qkv[f"{stem}.{which}"])
            except KeyError:
                raise MappingError(f"{stem}: separate q/k/v incomplete, missing {which!r}")
        if stem in tensors:
            raise MappingError(f"{stem}: both fused and separate projections present")
        tensors[stem] = np.ascontiguousarray(np.concatenate(parts, axis=0))


def build_model(state: dict, config: VitConfig):
    """Map, assemble, and validate; returns (VitModel, mapping)."""
    tensors, mapping = map_checkpoint(state, config)
    model = VitModel(config=config, tensors=tensors)
    violations = validate_model(model)
    if violations:
        raise MappingError(
            "mapped checkpoint fails inventory validation: " + "; ".join(violations))
    return model, mapping


def load_arch(spec: str) -> VitConfig:
    """Arch descriptor: inline JSON or a path to a JSON file."""
    text = spec if spec.lstrip().startswith("{") else Path(spec).read_text()
    return VitConfig.from_json(text)


def load_state(path) -> dict:
    try:
        obj = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch.load failure modes span pickle/zip/OS errors
        raise MappingError(f"{path}: not a loadable torch checkpoint: {exc}") from exc
    for key in ("state_dict", "model"):  # common checkpoint wrappers
        if isinstance(obj, dict) and isinstance(obj.get(key), dict):
            obj = obj[key]
    if not isinstance(obj, dict) or not obj or \
            not all(isinstance(v, torch.Tensor) for v in obj.values()):
        raise MappingError(f"{path}: not a tensor state dict")
    return obj


def write_mapping(mapping: dict, path) -> None:
    Path(path).write_text(json.dumps(mapping, indent=2, sort_keys=True) + "\n")
