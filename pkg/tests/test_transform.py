"""Transform topology: profiles, stage plans, forward shape chains."""

import numpy as np
import pytest

from tinylic.errors import ConfigError, DimensionError, MissingParameter, ShapeError
from tinylic.transform import (
    DEFAULT_CONFIG,
    DOWNSAMPLE_HYPER,
    DOWNSAMPLE_MAIN,
    PAD_MULTIPLE,
    TINY_CONFIG,
    NetworkConfig,
    TransformModel,
    analysis_hyper,
    analysis_main,
    synthesis_hyper,
    synthesis_main,
    transform_parameter_shapes,
)
from tinylic.weights import WeightStore, seeded_init


@pytest.fixture(scope="module")
def tiny_model():
    return TransformModel.from_store(seeded_init(TINY_CONFIG, 7), TINY_CONFIG)


def rand_image(h, w, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((3, h, w)).astype(np.float32)


class TestConfigValidation:
    def test_defaults_are_valid(self):
        assert DEFAULT_CONFIG.main_channels == (128, 192, 256, 320)
        assert DEFAULT_CONFIG.latent_channels == 320
        assert DEFAULT_CONFIG.hyper_latent_channels == 192
        assert TINY_CONFIG.latent_channels == 20

    def test_tuple_lengths(self):
        with pytest.raises(ConfigError):
            NetworkConfig(main_channels=(128, 192, 256))
        with pytest.raises(ConfigError):
            NetworkConfig(hyper_depths=(2, 2, 2))

    def test_heads_must_divide(self):
        with pytest.raises(ConfigError):
            NetworkConfig(main_heads=(7, 12, 16, 20))
        with pytest.raises(ConfigError):
            NetworkConfig(hyper_heads=7)

    def test_windows_odd(self):
        with pytest.raises(ConfigError):
            NetworkConfig(main_window=4)
        with pytest.raises(ConfigError):
            NetworkConfig(hyper_window=0)

    def test_prior_even(self):
        with pytest.raises(ConfigError):
            NetworkConfig(prior_channels=383)


class TestProfileText:
    @pytest.mark.parametrize("cfg", [DEFAULT_CONFIG, TINY_CONFIG])
    def test_roundtrip(self, cfg):
        assert NetworkConfig.from_profile(cfg.to_profile()) == cfg

    def test_text_form(self):
        text = TINY_CONFIG.to_profile()
        assert "main_channels=8,12,16,20\n" in text
        assert "prior_channels=40\n" in text
        assert text.endswith("\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            NetworkConfig.from_profile(DEFAULT_CONFIG.to_profile() + "bogus=1\n")

    def test_missing_key(self):
        text = "\n".join(line for line in DEFAULT_CONFIG.to_profile().splitlines()
                         if not line.startswith("prior_channels"))
        with pytest.raises(ConfigError, match="prior_channels"):
            NetworkConfig.from_profile(text)

    def test_bad_line(self):
        with pytest.raises(ConfigError):
            NetworkConfig.from_profile("just words\n")


class TestStagePlans:
    def test_stage_counts(self):
        shapes = transform_parameter_shapes(TINY_CONFIG)
        for net, stages in (("ga", 4), ("gs", 4), ("ha", 2), ("hs", 2)):
            for i in range(1, stages + 1):
                assert f"{net}.stage{i}.conv.weight" in shapes
            assert f"{net}.stage{stages + 1}.conv.weight" not in shapes

    def test_block_counts_follow_depths(self):
        cfg = NetworkConfig(
            main_channels=(8, 12, 16, 20), main_depths=(1, 2, 3, 1),
            main_heads=(2, 3, 4, 5), hyper_channels=(12, 12),
            hyper_depths=(2, 1), hyper_heads=3, prior_channels=40)
        shapes = transform_parameter_shapes(cfg)
        assert "ga.stage3.rnab3.na.wq" in shapes
        assert "ga.stage3.rnab4.na.wq" not in shapes
        # decoder mirrors: its stage 2 runs at the widths of encoder stage 3
        assert shapes["gs.stage2.rnab3.ln1.weight"] == (16,)
        assert "gs.stage2.rnab4.ln1.weight" not in shapes
        assert "ha.stage1.rnab2.na.wq" in shapes
        assert "hs.stage2.rnab2.na.wq" in shapes

    def test_decoder_mirrors_encoder_widths(self):
        shapes = transform_parameter_shapes(DEFAULT_CONFIG)
        mc = DEFAULT_CONFIG.main_channels
        for i in range(4):
            enc = shapes[f"ga.stage{i + 1}.rnab1.ln1.weight"]
            dec = shapes[f"gs.stage{4 - i}.rnab1.ln1.weight"]
            assert enc == dec == (mc[i],)

    def test_boundary_convs(self):
        shapes = transform_parameter_shapes(DEFAULT_CONFIG)
        # image-facing stages use 5x5 kernels, inner stages 3x3
        assert shapes["ga.stage1.conv.weight"] == (128, 3, 5, 5)
        assert shapes["ga.stage2.conv.weight"] == (192, 128, 3, 3)
        assert shapes["gs.stage1.conv.weight"] == (256, 320, 3, 3)
        assert shapes["gs.stage4.conv.weight"] == (3, 128, 5, 5)
        assert shapes["ha.stage2.conv.weight"] == (192, 192, 3, 3)
        assert shapes["hs.stage2.conv.weight"] == (384, 192, 3, 3)


class TestForwardShapes:
    def test_main_chain(self, tiny_model):
        x = rand_image(64, 64)
        y = analysis_main(x, tiny_model)
        assert y.shape == (20, 4, 4)
        z = analysis_hyper(y, tiny_model)
        assert z.shape == (12, 1, 1)
        prior = synthesis_hyper(z, tiny_model)
        assert prior.shape == (40, 4, 4)
        xh = synthesis_main(y, tiny_model)
        assert xh.shape == (3, 64, 64)
        assert xh.min() >= 0.0 and xh.max() <= 1.0

    def test_non_square(self, tiny_model):
        y = analysis_main(rand_image(64, 128), tiny_model)
        assert y.shape == (20, 4, 8)
        assert synthesis_main(y, tiny_model).shape == (3, 64, 128)

    def test_downsample_factors(self):
        assert DOWNSAMPLE_MAIN == 16
        assert DOWNSAMPLE_HYPER == 4
        assert PAD_MULTIPLE == 64

    def test_dims_must_divide(self, tiny_model):
        with pytest.raises(DimensionError):
            analysis_main(rand_image(60, 64), tiny_model)
        with pytest.raises(DimensionError):
            analysis_main(rand_image(64, 96), tiny_model)

    def test_plane_count_checked(self, tiny_model):
        with pytest.raises(ShapeError):
            analysis_main(np.zeros((4, 64, 64), dtype=np.float32), tiny_model)
        with pytest.raises(ShapeError):
            synthesis_main(np.zeros((19, 4, 4), dtype=np.float32), tiny_model)
        with pytest.raises(ShapeError):
            analysis_hyper(np.zeros((21, 4, 4), dtype=np.float32), tiny_model)
        with pytest.raises(ShapeError):
            synthesis_hyper(np.zeros((13, 1, 1), dtype=np.float32), tiny_model)

    def test_hyper_dims_must_divide(self, tiny_model):
        with pytest.raises(DimensionError):
            analysis_hyper(np.zeros((20, 6, 4), dtype=np.float32), tiny_model)


class TestForwardValues:
    def test_deterministic(self, tiny_model):
        x = rand_image(64, 64, seed=5)
        a = analysis_main(x, tiny_model)
        b = analysis_main(x.copy(), tiny_model)
        assert a.tobytes() == b.tobytes()

    def test_zero_weights_give_zero(self):
        store = seeded_init(TINY_CONFIG, 1)
        zeroed = WeightStore(profile=store.profile)
        for name, arr in store.items():
            zeroed.put(name, np.zeros_like(arr))
        model = TransformModel.from_store(zeroed, TINY_CONFIG)
        y = analysis_main(rand_image(64, 64), model)
        assert not y.any()
        xh = synthesis_main(np.ones((20, 4, 4), dtype=np.float32), model)
        assert not xh.any()

    def test_outputs_finite(self, tiny_model):
        y = analysis_main(rand_image(64, 64, seed=9), tiny_model)
        assert np.isfinite(y).all()
        assert np.isfinite(synthesis_hyper(
            analysis_hyper(y, tiny_model), tiny_model)).all()


class TestFromStore:
    def test_missing_parameter(self):
        store = seeded_init(TINY_CONFIG, 2)
        partial = WeightStore(profile=store.profile)
        for name, arr in store.items():
            if name != "hs.stage1.conv.bias":
                partial.put(name, arr)
        with pytest.raises(MissingParameter, match="hs.stage1.conv.bias"):
            TransformModel.from_store(partial, TINY_CONFIG)

    def test_wrong_shape(self):
        store = seeded_init(TINY_CONFIG, 2)
        bad = WeightStore(profile=store.profile)
        for name, arr in store.items():
            if name == "ga.stage1.conv.weight":
                arr = arr[:, :, :3, :3].copy()
            bad.put(name, arr)
        with pytest.raises(ShapeError):
            TransformModel.from_store(bad, TINY_CONFIG)
