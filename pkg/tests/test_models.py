"""Generator/discriminator forwards, checked against the hand-written reference."""

import numpy as np
import pytest

from fregan import engine, models, reference_gan as ref
from fregan.engine import ShapeError, Tensor
from fregan.models import GeneratorNet, build_models


def raw_params(net):
    return {k: v.data.copy() for k, v in net.params.items()}


@pytest.fixture(scope="module")
def nets():
    return build_models(seed=42)


class TestGenerator:
    def test_output_contract(self, nets):
        gen, _, _ = nets
        z = Tensor(np.random.default_rng(0).standard_normal((2, 64, 1, 1)).astype(np.float32))
        img, taps = gen.forward(z, fsc_enabled=True)
        assert img.shape == (2, 3, 64, 64)
        assert np.all(img.data >= -1.0) and np.all(img.data <= 1.0)
        assert taps.scales() == [8, 16, 32]
        for s in taps.scales():
            assert taps[s].shape[2:] == (s, s)

    def test_zeroed_output_layer_gives_zero_image(self, nets):
        gen, _, _ = nets
        params = {k: Tensor(v.data.copy()) for k, v in gen.params.items()}
        params["out_w"].data[:] = 0.0
        params["out_b"].data[:] = 0.0
        img, _ = GeneratorNet(params).forward(
            Tensor(np.zeros((2, 64, 1, 1), np.float32)), fsc_enabled=False
        )
        np.testing.assert_array_equal(img.data, 0.0)

    def test_fsc_doubles_taps(self, nets):
        gen, _, _ = nets
        z = Tensor(np.random.default_rng(1).standard_normal((2, 64, 1, 1)).astype(np.float32))
        _, taps_off = gen.forward(z, fsc_enabled=False)
        _, taps_on = gen.forward(z, fsc_enabled=True)
        for s in (8, 16, 32):
            np.testing.assert_allclose(
                taps_on[s].data, 2.0 * taps_off[s].data, rtol=1e-3, atol=1e-4
            )

    def test_bad_latent_shape_rejected(self, nets):
        gen, _, _ = nets
        with pytest.raises(ShapeError, match="latent"):
            gen.forward(Tensor(np.zeros((2, 32, 1, 1), np.float32)))

    def test_deterministic_forward(self, nets):
        gen, _, _ = nets
        z = np.random.default_rng(2).standard_normal((2, 64, 1, 1)).astype(np.float32)
        a, _ = gen.forward(Tensor(z), fsc_enabled=True)
        b, _ = gen.forward(Tensor(z), fsc_enabled=True)
        np.testing.assert_array_equal(a.data, b.data)

    def test_matches_reference_forward_bitwise(self, nets):
        # without the skip connection the two implementations must agree
        # to the bit, not just to a tolerance
        gen, _, _ = nets
        z = np.random.default_rng(3).standard_normal((4, 64, 1, 1)).astype(np.float32)
        img, _ = gen.forward(Tensor(z), fsc_enabled=False)
        want, _ = ref.generator_forward(raw_params(gen), z)
        np.testing.assert_array_equal(img.data, want)


class TestDiscriminator:
    def test_output_contract(self, nets):
        _, disc, _ = nets
        x = Tensor(np.random.default_rng(4).standard_normal((3, 3, 64, 64)).astype(np.float32))
        score, taps, recon = disc.forward(x)
        assert score.shape == (3, 1, 1, 1)
        assert taps.scales() == [8, 16, 32]
        w1, w2, w3, _ = models.D_WIDTHS
        assert taps[32].shape == (3, w1, 32, 32)
        assert taps[16].shape == (3, w2, 16, 16)
        assert taps[8].shape == (3, w3, 8, 8)
        assert recon.shape == (3, 3, 32, 32)
        assert np.all(np.abs(recon.data) <= 1.0)

    def test_identical_images_get_identical_scores(self, nets):
        _, disc, _ = nets
        one = np.random.default_rng(5).standard_normal((1, 3, 64, 64)).astype(np.float32)
        batch = np.concatenate([one, one], axis=0)
        score, _, _ = disc.forward(Tensor(batch))
        assert score.data[0, 0, 0, 0] == score.data[1, 0, 0, 0]

    def test_wrong_input_shape_rejected(self, nets):
        _, disc, _ = nets
        with pytest.raises(ShapeError):
            disc.forward(Tensor(np.zeros((1, 3, 32, 32), np.float32)))

    def test_matches_reference_forward_bitwise(self, nets):
        _, disc, _ = nets
        x = np.random.default_rng(6).standard_normal((4, 3, 64, 64)).astype(np.float32)
        score, _, recon = disc.forward(Tensor(x))
        want_score, _, want_recon = ref.discriminator_forward(
            raw_params(disc), x, need_decoder=True
        )
        np.testing.assert_array_equal(score.data, want_score)
        np.testing.assert_array_equal(recon.data, want_recon)


class TestBuild:
    def test_same_seed_same_params(self):
        g1, d1, h1 = build_models(7)
        g2, d2, h2 = build_models(7)
        for k in g1.params:
            np.testing.assert_array_equal(g1.params[k].data, g2.params[k].data)
        for k in d1.params:
            np.testing.assert_array_equal(d1.params[k].data, d2.params[k].data)
        for s in h1:
            for k in h1[s].params:
                np.testing.assert_array_equal(h1[s].params[k].data, h2[s].params[k].data)

    def test_different_seed_differs(self):
        g1, _, _ = build_models(7)
        g2, _, _ = build_models(8)
        assert not np.array_equal(g1.params["stem_w"].data, g2.params["stem_w"].data)

    def test_head_scales_and_channels(self):
        _, _, heads = build_models(0)
        assert sorted(heads) == [8, 16, 32]
        channels = models.head_in_channels()
        for s, head in heads.items():
            assert head.params["conv1_w"].shape[1] == channels[s]
