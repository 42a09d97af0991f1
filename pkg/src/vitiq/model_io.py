"""ViT configuration/weight container and its on-disk format (VWTF).

VWTF is a framework-free little-endian binary layout:

    magic  'VWTF' (4 bytes)
    version         u32  (currently 1)
    header_len      u32
    header          UTF-8 JSON text with the VitConfig fields
    tensor_count    u32
    per tensor, sorted by name:
        name_len    u32
        name        UTF-8
        rank        u32
        dims        rank x u64
        payload     float32 LE, row-major

Writes are deterministic (sorted tensor names, canonical JSON), so a model
serializes to identical bytes every time, and read(write(m)) is bit-exact.

Weight orientation convention: every linear layer stores its matrix as
(out_features, in_features) and is applied as x @ W.T + b. The fused qkv
tensor is (3*D, D) with the query rows first, then key, then value; within
each third, head h owns rows [h*D/H, (h+1)*D/H).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"VWTF"
VERSION = 1

FEATURE_POOLING_MODES = ("mean_patch", "class_token")


@dataclass(frozen=True)
class VitConfig:
    """Architecture hyper-parameters of an L-block ViT."""

    image_size: int
    patch_size: int
    embed_dim: int
    num_blocks: int
    num_heads: int
    mlp_ratio: float = 4.0
    has_class_token: bool = False
    feature_pooling: str = "mean_patch"

    def __post_init__(self):
        if self.image_size <= 0 or self.patch_size <= 0:
            raise ValueError("image_size and patch_size must be positive")
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.num_blocks < 1 or self.num_heads < 1:
            raise ValueError("num_blocks and num_heads must be >= 1")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.mlp_ratio <= 0:
            raise ValueError("mlp_ratio must be positive")
        hidden = self.embed_dim * self.mlp_ratio
        if abs(hidden - round(hidden)) > 1e-9:
            raise ValueError(f"embed_dim * mlp_ratio = {hidden} is not an integer")
        if self.feature_pooling not in FEATURE_POOLING_MODES:
            raise ValueError(f"unknown feature_pooling {self.feature_pooling!r}")
        if self.feature_pooling == "class_token" and not self.has_class_token:
            raise ValueError("class_token pooling requires has_class_token")

    @property
    def num_patches(self) -> int:
        side = self.image_size // self.patch_size
        return side * side

    @property
    def seq_len(self) -> int:
        return self.num_patches + (1 if self.has_class_token else 0)

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def hidden_dim(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))

    def to_json(self) -> str:
        return json.dumps(
            {
                "image_size": self.image_size,
                "patch_size": self.patch_size,
                "embed_dim": self.embed_dim,
                "num_blocks": self.num_blocks,
                "num_heads": self.num_heads,
                "mlp_ratio": float(self.mlp_ratio),
                "has_class_token": bool(self.has_class_token),
                "feature_pooling": self.feature_pooling,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "VitConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"unparseable VWTF header: {exc}") from exc
        try:
            return cls(
                image_size=int(raw["image_size"]),
                patch_size=int(raw["patch_size"]),
                embed_dim=int(raw["embed_dim"]),
                num_blocks=int(raw["num_blocks"]),
                num_heads=int(raw["num_heads"]),
                mlp_ratio=float(raw["mlp_ratio"]),
                has_class_token=bool(raw["has_class_token"]),
                feature_pooling=str(raw["feature_pooling"]),
            )
        except KeyError as exc:
            raise FormatError(f"VWTF header missing field {exc}") from exc


@dataclass
class VitModel:
    """A VitConfig plus the named weight tensors it implies."""

    config: VitConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def tensor(self, name: str) -> np.ndarray:
        return self.tensors[name]


def expected_tensor_shapes(config: VitConfig) -> dict[str, tuple[int, ...]]:
    """The exact tensor inventory a valid model must carry for `config`."""
    d = config.embed_dim
    shapes: dict[str, tuple[int, ...]] = {
        "patch_embed.weight": (d, config.patch_size * config.patch_size * 3),
        "patch_embed.bias": (d,),
        "pos_embed": (config.seq_len, d),
        "final_norm.gamma": (d,),
        "final_norm.beta": (d,),
    }
    if config.has_class_token:
        shapes["class_token"] = (d,)
    for i in range(config.num_blocks):
        p = f"block{i}."
        shapes[p + "ln1.gamma"] = (d,)
        shapes[p + "ln1.beta"] = (d,)
        shapes[p + "qkv.weight"] = (3 * d, d)
        shapes[p + "qkv.bias"] = (3 * d,)
        shapes[p + "attn_out.weight"] = (d, d)
        shapes[p + "attn_out.bias"] = (d,)
        shapes[p + "ln2.gamma"] = (d,)
        shapes[p + "ln2.beta"] = (d,)
        shapes[p + "mlp.fc1.weight"] = (config.hidden_dim, d)
        shapes[p + "mlp.fc1.bias"] = (config.hidden_dim,)
        shapes[p + "mlp.fc2.weight"] = (d, config.hidden_dim)
        shapes[p + "mlp.fc2.bias"] = (d,)
    return shapes


def validate_model(model: VitModel) -> list[str]:
    """Check the tensor inventory against the config; violations are strings.

    Returns an empty list iff every required tensor is present with exactly
    the shape implied by the config. Extra tensors are tolerated.
    """
    violations = []
    for name, want in sorted(expected_tensor_shapes(model.config).items()):
        got = model.tensors.get(name)
        if got is None:
            violations.append(f"{name}: expected shape {want}, found missing")
        elif tuple(got.shape) != want:
            violations.append(f"{name}: expected shape {want}, found {tuple(got.shape)}")
    return violations


def _require_valid(model: VitModel, context: str):
    violations = validate_model(model)
    if violations:
        raise ValidationError(f"{context}: {len(violations)} violation(s)", violations)


def write_model(model: VitModel, path) -> None:
    """Serialize `model` to VWTF at `path`. Byte-deterministic."""
    _require_valid(model, "write_model")
    header = model.config.to_json().encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(model.tensors)))
        for name in sorted(model.tensors):
            arr = np.ascontiguousarray(model.tensors[name], dtype=np.float32)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.astype("<f4", copy=False).tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated VWTF file: expected {n} bytes for {what}, got {len(buf)}")
    return buf


def read_model(path, validate: bool = True) -> VitModel:
    """Load a VWTF file; raises FormatError / ValidationError on bad input.

    Pass validate=False to read a structurally sound file whose tensor
    inventory may be wrong (for inspection tools that report violations
    instead of failing).
    """
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, header_len = struct.unpack("<II", _read_exact(fh, 8, "version/header_len"))
        if version != VERSION:
            raise FormatError(f"unsupported VWTF version {version}")
        config = VitConfig.from_json(_read_exact(fh, header_len, "header").decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor_count"))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, "name_len"))
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, f"{name} dims"))
            n = int(np.prod(dims)) if rank else 1
            payload = _read_exact(fh, 4 * n, f"{name} payload")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    model = VitModel(config=config, tensors=tensors)
    if validate:
        _require_valid(model, f"read_model({path})")
    return model


def random_model(config: VitConfig, seed: int = 0) -> VitModel:
    """Seeded random weights with the exact inventory `config` requires.

    Intended for tests and demos: magnitudes are chosen so activations stay
    O(1) through the blocks. Layer-norm affines sit near identity.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in expected_tensor_shapes(config).items():
        if name.endswith(("ln1.gamma", "ln2.gamma", "final_norm.gamma")):
            arr = 1.0 + 0.05 * rng.standard_normal(shape)
        elif name.endswith(("ln1.beta", "ln2.beta", "final_norm.beta")) or name.endswith(".bias"):
            arr = 0.02 * rng.standard_normal(shape)
        else:
            arr = 0.1 * rng.standard_normal(shape)
        tensors[name] = arr.astype(np.float32)
    return VitModel(config=config, tensors=tensors)
