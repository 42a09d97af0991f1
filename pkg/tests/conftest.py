import numpy as np
import pytest

from vitiq import VitConfig, VitModel, expected_tensor_shapes, random_model

# the small architecture used throughout: 8x8 image, 4x4 patches -> N=4 patches,
# width 8, 2 heads, 2 blocks
TINY = VitConfig(image_size=8, patch_size=4, embed_dim=8, num_blocks=2, num_heads=2)


def make_zero_block_model(config: VitConfig = TINY, seed: int = 0) -> VitModel:
    """Random patch/positional embeddings, but every block is a no-op:
    zero projection weights and biases, layer-norm affine at identity."""
    model = random_model(config, seed=seed)
    tensors = dict(model.tensors)
    for name, shape in expected_tensor_shapes(config).items():
        if name.startswith("block") or name.startswith("final_norm"):
            if name.endswith(".gamma"):
                tensors[name] = np.ones(shape, dtype=np.float32)
            else:
                tensors[name] = np.zeros(shape, dtype=np.float32)
    return VitModel(config=config, tensors=tensors)


def random_image(seed: int, size: int = TINY.image_size) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)


@pytest.fixture(scope="session")
def tiny_config() -> VitConfig:
    return TINY


@pytest.fixture(scope="session")
def tiny_model() -> VitModel:
    return random_model(TINY, seed=0)


@pytest.fixture(scope="session")
def zero_block_model() -> VitModel:
    return make_zero_block_model()
