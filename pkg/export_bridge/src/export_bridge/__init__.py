"""Checkpoint export and activation-fixture dumping for the vitiq engine."""
__version__ = "0.1.0"

from .dump import PREFIX_K, build_source_model, dump_fixtures, record_for_image
from .errors import BridgeError, DumpError, MappingError
from .mapping import (
    build_model,
    flatten_conv_patch_weight,
    load_arch,
    load_state,
    map_checkpoint,
    write_mapping,
)
from .torch_vit import TorchViT

__all__ = [
    "__version__",
    "PREFIX_K", "build_source_model", "dump_fixtures", "record_for_image",
    "BridgeError", "DumpError", "MappingError",
    "build_model", "flatten_conv_patch_weight", "load_arch", "load_state",
    "map_checkpoint", "write_mapping",
    "TorchViT",
]
