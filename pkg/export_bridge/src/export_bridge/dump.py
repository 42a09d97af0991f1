"""Reference activation dumps from the source (torch) runtime.

One JSON object per line, fields in this order:

  image           file name
  image_sha256    digest of the PPM bytes
  taps_first16    per block: first K values of the row-major (N, D) tap,
                  class token stripped
  taps_sha256     per block: digest of the full tap as f32 LE bytes
  attn_first16    per head: first K values of the last block's (T, T)
                  attention matrix (class token kept)
  final_feature   pooled feature after the final norm

Taps are captured with forward hooks on each block module, i.e. after the
second residual and before the final norm - the same points the engine
records. K defaults to 16; checksums cover the full tensors so a prefix
match plus checksum stability is strong evidence of an identical dump.
"""
import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from vitiq import preprocess, read_ppm

from .errors import DumpError
from .torch_vit import TorchViT

PREFIX_K = 16


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _f32(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().to(torch.float32).numpy()


def _prefix(arr: np.ndarray, k: int) -> list:
    return [float(v) for v in arr.reshape(-1)[:k]]


def build_source_model(state: dict, config) -> TorchViT:
    model = TorchViT(config)
    try:
        model.load_state_dict({k: v.to(torch.float32) for k, v in state.items()},
                              strict=True)
    except RuntimeError as exc:
        raise DumpError(f"checkpoint does not fit arch descriptor: {exc}") from exc
    model.eval()
    return model


def record_for_image(model: TorchViT, path: Path, k: int = PREFIX_K) -> dict:
    config = model.config
    cls_rows = 1 if config.has_class_token else 0

    named = dict(model.named_modules())
    blocks = []
    for i in range(config.num_blocks):
        try:
            blocks.append(named[f"blocks.{i}"])
        except KeyError:
            raise DumpError(f"tap hook target blocks.{i} not found in source model")

    captured: list[torch.Tensor] = []
    handles = [b.register_forward_hook(lambda m, args, out: captured.append(out.detach()))
               for b in blocks]
    try:
        img = preprocess(read_ppm(path))
        tensor = torch.from_numpy(np.ascontiguousarray(img.data.transpose(2, 0, 1)))
        with torch.no_grad():
            tokens = model(tensor)
            pooled = model.pooled_feature(tokens)
    finally:
        for h in handles:
            h.remove()
    if len(captured) != config.num_blocks:
        raise DumpError(f"expected {config.num_blocks} tap captures, got {len(captured)}")

    taps = [_f32(t[cls_rows:]) for t in captured]
    attn = model.blocks[-1].attn.last_weights
    if attn is None:
        raise DumpError("last block recorded no attention weights")
    heads = [_f32(attn[h]) for h in range(attn.shape[0])]

    return {
        "image": path.name,
        "image_sha256": _sha256(path.read_bytes()),
        "taps_first16": [_prefix(t, k) for t in taps],
        "taps_sha256": [_sha256(np.ascontiguousarray(t, dtype="<f4").tobytes())
                        for t in taps],
        "attn_first16": [_prefix(h, k) for h in heads],
        "final_feature": [float(v) for v in _f32(pooled)],
    }


def dump_fixtures(model: TorchViT, images_dir, out_path, k: int = PREFIX_K) -> int:
    """Writes one record per PPM in images_dir (sorted); returns the count."""
    paths = sorted(Path(images_dir).glob("*.ppm"))
    if not paths:
        raise DumpError(f"no .ppm images in {images_dir}")
    torch.set_num_threads(1)  # pin reduction order so dumps are reproducible
    lines = [json.dumps(record_for_image(model, p, k)) for p in paths]
    Path(out_path).write_text("\n".join(lines) + "\n")
    return len(paths)
