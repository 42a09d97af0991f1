import numpy as np
import pytest

from vitiq import (
    ShapeError,
    VitConfig,
    VitModel,
    attention_block,
    expected_tensor_shapes,
    extract_patches,
    forward_with_taps,
    patchify_embed,
    preprocess,
    random_model,
)
from conftest import TINY, make_zero_block_model, random_image
from oracle import model_as_lists, ref_forward, ref_patchify


def forward_pair(model, seed=0):
    """Run engine and reference on the same random image."""
    raw = random_image(seed, model.config.image_size)
    img = preprocess(raw)
    taps = forward_with_taps(img, model)
    config, tensors = model_as_lists(model)
    ref = ref_forward(config, tensors, img.data.astype(float).tolist())
    return taps, ref


class TestPreprocess:
    def test_endpoints(self):
        raw = np.zeros((8, 8, 3), dtype=np.uint8)
        raw[0, 0, 0] = 255
        img = preprocess(raw)
        assert img.data[0, 0, 0] == 1.0
        assert img.data[0, 1, 0] == -1.0

    def test_midpoint_value(self):
        raw = np.full((8, 8, 3), 128, dtype=np.uint8)
        assert abs(float(preprocess(raw).data[0, 0, 0]) - 0.00392157) < 1e-7

    def test_rejects_wrong_layout(self):
        with pytest.raises(ShapeError):
            preprocess(np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(ShapeError):
            preprocess(np.zeros((8, 6, 3), dtype=np.uint8))  # non-square

    def test_rejects_non_u8(self):
        with pytest.raises(ShapeError):
            preprocess(np.zeros((8, 8, 3), dtype=np.float32))


class TestExtractPatches:
    def test_matches_explicit_loop_order(self):
        raw = random_image(3)
        img = preprocess(raw)
        got = extract_patches(img, 4)
        want = np.array(ref_patchify(img.data.astype(float).tolist(), 4), dtype=np.float32)
        assert got.shape == (4, 48)
        assert np.array_equal(got, want)

    def test_single_patch_is_row_major_channel_innermost(self):
        raw = np.arange(2 * 2 * 3, dtype=np.uint8).reshape(2, 2, 3)
        img = preprocess(raw)
        flat = extract_patches(img, 2)
        # (r, c, ch) flattens with ch fastest, then c, then r
        assert np.array_equal(flat[0], img.data.reshape(-1))


class TestPatchifyEmbed:
    def test_zero_everything_annihilates(self, tiny_model):
        tensors = dict(tiny_model.tensors)
        tensors["patch_embed.weight"] = np.zeros((8, 48), dtype=np.float32)
        tensors["patch_embed.bias"] = np.zeros(8, dtype=np.float32)
        tensors["pos_embed"] = np.zeros((4, 8), dtype=np.float32)
        model = VitModel(config=TINY, tensors=tensors)
        z0 = patchify_embed(preprocess(random_image(0)), model)
        assert np.array_equal(z0, np.zeros((4, 8), dtype=np.float32))

    def test_zero_projection_passes_positional_table(self, tiny_model):
        tensors = dict(tiny_model.tensors)
        tensors["patch_embed.weight"] = np.zeros((8, 48), dtype=np.float32)
        tensors["patch_embed.bias"] = np.zeros(8, dtype=np.float32)
        model = VitModel(config=TINY, tensors=tensors)
        z0 = patchify_embed(preprocess(random_image(1)), model)
        assert np.array_equal(z0, tensors["pos_embed"])

    def test_single_patch_identity_slice(self):
        # P = image size -> one patch; projection rows pick flattened pixels
        cfg = VitConfig(image_size=2, patch_size=2, embed_dim=12, num_blocks=1, num_heads=2)
        model = random_model(cfg, seed=0)
        tensors = dict(model.tensors)
        tensors["patch_embed.weight"] = np.eye(12, dtype=np.float32)
        tensors["patch_embed.bias"] = np.zeros(12, dtype=np.float32)
        model = VitModel(config=cfg, tensors=tensors)
        img = preprocess(random_image(5, size=2))
        z0 = patchify_embed(img, model)
        want = img.data.reshape(1, 12) + tensors["pos_embed"]
        assert np.allclose(z0, want, atol=1e-7)

    def test_wrong_image_size_rejected(self, tiny_model):
        with pytest.raises(ShapeError):
            patchify_embed(preprocess(random_image(0, size=12)), tiny_model)


class TestAttentionBlock:
    def test_zero_weights_pass_input_through(self, zero_block_model):
        x = np.random.default_rng(0).standard_normal((4, 8)).astype(np.float32)
        out, attn = attention_block(x, 0, zero_block_model)
        assert np.array_equal(out, x)
        assert len(attn) == 2

    def test_single_position_attention_is_one(self):
        cfg = VitConfig(image_size=4, patch_size=4, embed_dim=4, num_blocks=1, num_heads=1)
        model = random_model(cfg, seed=2)
        x = np.random.default_rng(1).standard_normal((1, 4)).astype(np.float32)
        _, attn = attention_block(x, 0, model)
        assert np.array_equal(attn[0], np.array([[1.0]], dtype=np.float32))

    def test_matches_oracle_on_small_block(self):
        cfg = VitConfig(image_size=4, patch_size=2, embed_dim=4, num_blocks=1, num_heads=2)
        model = random_model(cfg, seed=7)
        img = preprocess(random_image(7, size=4))
        x = patchify_embed(img, model)
        out, attn = attention_block(x, 0, model)

        config, tensors = model_as_lists(model)
        ref = ref_forward(config, tensors, img.data.astype(float).tolist())
        assert np.allclose(out, ref["per_block"][0], atol=1e-5)
        for h in range(2):
            assert np.allclose(attn[h], ref["last_attention"][h], atol=1e-5)


class TestForwardWithTaps:
    def test_single_block_structure(self):
        cfg = VitConfig(image_size=8, patch_size=4, embed_dim=8, num_blocks=1, num_heads=2)
        taps = forward_with_taps(preprocess(random_image(0)), random_model(cfg, seed=0))
        assert taps.num_blocks == 1
        assert len(taps.last_block_attention) == 2
        assert taps.final_feature.shape == (8,)

    def test_zero_blocks_chain_to_identity(self, zero_block_model):
        img = preprocess(random_image(4))
        taps = forward_with_taps(img, zero_block_model)
        z0 = patchify_embed(img, zero_block_model)
        assert np.array_equal(taps.per_block_patch_embeddings[0], z0)
        assert np.array_equal(taps.per_block_patch_embeddings[1], z0)

    def test_matches_oracle_at_every_tap(self, tiny_model):
        taps, ref = forward_pair(tiny_model, seed=11)
        for z, z_ref in zip(taps.per_block_patch_embeddings, ref["per_block"]):
            assert np.allclose(z, z_ref, atol=1e-5)
        for a, a_ref in zip(taps.last_block_attention, ref["last_attention"]):
            assert np.allclose(a, a_ref, atol=1e-5)
        assert np.allclose(taps.final_feature, ref["final"], atol=1e-5)

    def test_attention_rows_sum_to_one(self, tiny_model):
        taps = forward_with_taps(preprocess(random_image(2)), tiny_model)
        for a in taps.last_block_attention:
            assert np.allclose(a.sum(axis=1), 1.0, atol=1e-5)

    def test_deterministic_bit_identical(self, tiny_model):
        img = preprocess(random_image(9))
        t1 = forward_with_taps(img, tiny_model)
        t2 = forward_with_taps(img, tiny_model)
        for a, b in zip(t1.per_block_patch_embeddings, t2.per_block_patch_embeddings):
            assert a.tobytes() == b.tobytes()
        assert t1.final_feature.tobytes() == t2.final_feature.tobytes()

    def test_tap_shapes_ignore_class_token(self):
        cfg = VitConfig(image_size=8, patch_size=4, embed_dim=8, num_blocks=2, num_heads=2,
                        has_class_token=True)
        model = random_model(cfg, seed=5)
        taps = forward_with_taps(preprocess(random_image(5)), model)
        for z in taps.per_block_patch_embeddings:
            assert z.shape == (4, 8)  # class row stripped
        for a in taps.last_block_attention:
            assert a.shape == (5, 5)  # attention keeps the full sequence

    def test_class_token_model_matches_oracle(self):
        cfg = VitConfig(image_size=8, patch_size=4, embed_dim=8, num_blocks=2, num_heads=2,
                        has_class_token=True, feature_pooling="class_token")
        model = random_model(cfg, seed=6)
        taps, ref = forward_pair(model, seed=6)
        for z, z_ref in zip(taps.per_block_patch_embeddings, ref["per_block"]):
            assert np.allclose(z, z_ref, atol=1e-5)
        assert np.allclose(taps.final_feature, ref["final"], atol=1e-5)

    def test_all_attention_option(self, tiny_model):
        img = preprocess(random_image(1))
        taps = forward_with_taps(img, tiny_model, keep_all_attention=True)
        assert taps.all_attention is not None
        assert len(taps.all_attention) == 2
        assert np.array_equal(taps.all_attention[-1][0], taps.last_block_attention[0])

    def test_invalid_model_is_rejected(self, tiny_model):
        tensors = dict(tiny_model.tensors)
        del tensors["block1.ln2.beta"]
        broken = VitModel(config=TINY, tensors=tensors)
        with pytest.raises(ShapeError, match="block1.ln2.beta"):
            forward_with_taps(preprocess(random_image(0)), broken)


def test_mean_patch_pooling_definition(tiny_model):
    # pooled feature equals the mean of final-LN rows over patches
    img = preprocess(random_image(13))
    taps = forward_with_taps(img, tiny_model)
    config, tensors = model_as_lists(tiny_model)
    ref = ref_forward(config, tensors, img.data.astype(float).tolist())
    assert np.allclose(taps.final_feature, ref["final"], atol=1e-5)
