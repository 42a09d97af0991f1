"""Does the score track degradation severity?

Takes a structured synthetic image, applies each degradation kind at every
level, scores all variants with a random model, and reports how the mean
cross-block distance moves with level. With an untrained model the
correlation can go either way; the point is the plumbing, and with a real
face-recognition checkpoint the same flow is the quality-gradient check.

    python3 demos/degradation_gradient.py
"""
import numpy as np

from vitiq import (
    DEGRADATION_KINDS,
    DegradationSpec,
    QualityConfig,
    VitConfig,
    apply,
    cross_block_distances,
    derive_seed,
    forward_with_taps,
    preprocess,
    random_model,
    spearman,
)
from vitiq.errors import ContractError


def structured_image(size: int = 32) -> np.ndarray:
    """Gradient background with a bright square: something blur can destroy."""
    yy, xx = np.mgrid[0:size, 0:size]
    img = np.stack([(yy * 255 / size), (xx * 255 / size),
                    np.full_like(yy, 96.0)], axis=-1)
    img[size // 4: size // 2, size // 4: size // 2] = 240.0
    return img.astype(np.uint8)


def run() -> None:
    config = VitConfig(image_size=32, patch_size=8, embed_dim=16,
                       num_blocks=4, num_heads=4)
    model = random_model(config, seed=3)
    cfg = QualityConfig.default_for(config.num_blocks)
    base = structured_image(config.image_size)
    seed = 2026

    levels, mean_distances = [], []
    print(f"{'kind':<16}{'level':>6}{'mean distance':>16}")
    for kind_ix, kind in enumerate(DEGRADATION_KINDS):
        for level in range(0, 11, 2):
            variant_seed = derive_seed(seed, 0, kind_ix, level)
            img = apply(base, DegradationSpec(kind, level, seed=variant_seed))
            taps = forward_with_taps(preprocess(img), model)
            d = float(np.mean(cross_block_distances(taps, cfg)))
            levels.append(level)
            mean_distances.append(d)
            print(f"{kind:<16}{level:>6}{d:>16.6f}")

    try:
        rho = spearman(levels, mean_distances)
        print(f"\nSpearman(level, mean distance) = {rho:.3f}")
    except ContractError as exc:
        print(f"\nSpearman undefined: {exc}")
    print("(expect a strong positive value with a trained checkpoint)")


if __name__ == "__main__":
    run()
