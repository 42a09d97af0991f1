"""Score a batch of images end to end.

Builds a small random model, synthesizes a few PPM images, scores them
through the library pipeline, and shows the per-patch breakdown for one
image. Run from the repository root:

    python3 demos/score_images.py
"""
import tempfile
from pathlib import Path

import numpy as np

from vitiq import (
    QualityConfig,
    VitConfig,
    preprocess,
    random_model,
    read_ppm,
    score_image,
    write_model,
    write_ppm,
)
from vitiq.cli import main as cli_main


def synth_image(seed: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(size, size, 3))
    return base.astype(np.uint8)


def run() -> None:
    config = VitConfig(image_size=32, patch_size=8, embed_dim=16,
                       num_blocks=4, num_heads=4)
    model = random_model(config, seed=7)
    cfg = QualityConfig.default_for(config.num_blocks)
    print(f"model: {config.num_blocks} blocks, {config.num_patches} patches, "
          f"D={config.embed_dim}")
    print(f"quality config: blocks {cfg.block_set}, alpha {cfg.alpha}, "
          f"aggregation {cfg.aggregation}\n")

    work = Path(tempfile.mkdtemp(prefix="vitiq_demo_"))
    images = []
    for i in range(5):
        p = work / f"img{i}.ppm"
        write_ppm(synth_image(seed=i, size=config.image_size), p)
        images.append(p)

    print("library scores:")
    for p in images:
        result = score_image(preprocess(read_ppm(p)), model, cfg)
        print(f"  {p.name}\tQ = {result.image_score:.6f}")

    # per-patch view for the first image: which patches were least stable
    result = score_image(preprocess(read_ppm(images[0])), model, cfg)
    order = np.argsort(result.per_patch_quality)
    print(f"\n{images[0].name}, three least stable patches:")
    for ix in order[:3]:
        print(f"  patch {ix}: mean distance {result.per_patch_mean_distance[ix]:.4f}, "
              f"q = {result.per_patch_quality[ix]:.4f}")

    # the CLI produces the same numbers from the same inputs
    model_path = work / "model.vwtf"
    write_model(model, model_path)
    print("\nsame batch through the CLI:")
    cli_main(["score", "--model", str(model_path)] + [str(p) for p in images])


if __name__ == "__main__":
    run()
