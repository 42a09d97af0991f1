import numpy as np
import pytest
import torch

from vitiq import VitConfig, write_ppm
from export_bridge import TorchViT

BRIDGE_CONFIG = VitConfig(image_size=16, patch_size=4, embed_dim=16,
                          num_blocks=3, num_heads=4, mlp_ratio=2.0,
                          has_class_token=True, feature_pooling="class_token")

NO_CLS_CONFIG = VitConfig(image_size=16, patch_size=4, embed_dim=16,
                          num_blocks=2, num_heads=2, mlp_ratio=2.0)


def seeded_torch_vit(config: VitConfig = BRIDGE_CONFIG, seed: int = 0) -> TorchViT:
    torch.manual_seed(seed)
    model = TorchViT(config)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if "norm" in name and name.endswith("weight"):
                p.copy_(1.0 + 0.05 * torch.randn_like(p))
            else:
                p.copy_(0.2 * torch.randn_like(p))
    model.eval()
    return model


@pytest.fixture(scope="session")
def torch_model() -> TorchViT:
    return seeded_torch_vit()


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("imgs")
    rng = np.random.default_rng(17)
    for i in range(4):
        img = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        write_ppm(img, root / f"face{i}.ppm")
    return root


@pytest.fixture()
def checkpoint(torch_model, tmp_path):
    path = tmp_path / "ckpt.pt"
    torch.save(torch_model.state_dict(), path)
    return path


@pytest.fixture()
def arch_file(tmp_path):
    path = tmp_path / "arch.json"
    path.write_text(BRIDGE_CONFIG.to_json())
    return path
