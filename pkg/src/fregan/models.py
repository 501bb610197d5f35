"""Toy generator and discriminator with feature taps at the 8/16/32 scales.

The generator maps a 64-dim latent to a 3x64x64 image in [-1, 1] through a
4x4 stem and four nearest-upsample conv blocks; the discriminator mirrors
it with stride-2 conv blocks down to a scalar score, and carries a small
decoder head that reconstructs a 32x32 image from its 8x8 features (the
self-supervised feature-quality term). Channel widths are deliberately
slim so a few-thousand-step CPU run finishes in minutes.

Parameter creation order is fixed and documented by the code order below;
given one seed the full parameter set is reproducible bit for bit.
"""

from __future__ import annotations

import numpy as np

from . import engine
from .engine import ShapeError, Tensor
from .losses import FeatureTaps, HfdHead, fsc_apply

LATENT_DIM = 64
IMAGE_SIZE = 64
IMAGE_CHANNELS = 3
TAP_SCALES = (8, 16, 32)

# channels at scales 4 / 8 / 16 / 32 / 64
G_WIDTHS = (64, 48, 32, 16, 8)
# channels at scales 32 / 16 / 8 / 4; deliberately slim so the
# discriminator saturates its hinge late instead of dominating early
D_WIDTHS = (12, 24, 32, 48)
DECODER_WIDTH = 16
DECODER_SIZE = 32
HEAD_WIDTH = 16

WEIGHT_STD = 0.02


def _weight(rng: np.random.Generator, shape) -> Tensor:
    data = rng.standard_normal(shape, dtype=np.float32) * np.float32(WEIGHT_STD)
    return Tensor(data, requires_grad=True)


def _gamma(c: int) -> Tensor:
    return Tensor(np.ones((1, c, 1, 1), np.float32), requires_grad=True)


def _beta(c: int) -> Tensor:
    return Tensor(np.zeros((1, c, 1, 1), np.float32), requires_grad=True)


def _bias(c: int) -> Tensor:
    return Tensor(np.zeros((1, c, 1, 1), np.float32), requires_grad=True)


class GeneratorNet:
    """latent (N, 64, 1, 1) -> image (N, 3, 64, 64) in [-1, 1]."""

    def __init__(self, params: dict[str, Tensor]):
        self.params = params

    @classmethod
    def init(cls, rng: np.random.Generator) -> "GeneratorNet":
        c4, c8, c16, c32, c64 = G_WIDTHS
        params: dict[str, Tensor] = {"stem_w": _weight(rng, (LATENT_DIM, c4, 4, 4))}
        chain = [(8, c4, c8), (16, c8, c16), (32, c16, c32), (64, c32, c64)]
        for scale, cin, cout in chain:
            params[f"up{scale}_w"] = _weight(rng, (cout, cin, 3, 3))
            params[f"up{scale}_gamma"] = _gamma(cout)
            params[f"up{scale}_beta"] = _beta(cout)
        params["out_w"] = _weight(rng, (IMAGE_CHANNELS, c64, 3, 3))
        params["out_b"] = _bias(IMAGE_CHANNELS)
        return cls(params)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def forward(self, z: Tensor, fsc_enabled: bool = True) -> tuple[Tensor, FeatureTaps]:
        """Generate images; taps are the (post-skip) 8/16/32 features."""
        if z.shape[1:] != (LATENT_DIM, 1, 1):
            raise ShapeError(f"latent must be (N, {LATENT_DIM}, 1, 1), got {z.shape}")
        p = self.params
        x = engine.conv2d_transpose(z, p["stem_w"], stride=1)
        taps: dict[int, Tensor] = {}
        for scale in (8, 16, 32, 64):
            x = engine.upsample_nearest2(x)
            x = engine.conv2d(x, p[f"up{scale}_w"], padding=1)
            x = engine.batch_norm2d(x, p[f"up{scale}_gamma"], p[f"up{scale}_beta"])
            x = engine.leaky_relu(x, 0.2)
            if scale in TAP_SCALES:
                if fsc_enabled:
                    x = fsc_apply(x)
                taps[scale] = x
        image = engine.tanh(engine.conv2d(x, p["out_w"], bias=p["out_b"], padding=1))
        return image, FeatureTaps("generator", taps)


class DiscriminatorNet:
    """image (N, 3, 64, 64) -> (score, taps at 32/16/8, 32x32 reconstruction)."""

    def __init__(self, params: dict[str, Tensor]):
        self.params = params

    @classmethod
    def init(cls, rng: np.random.Generator) -> "DiscriminatorNet":
        w1, w2, w3, w4 = D_WIDTHS
        params: dict[str, Tensor] = {}
        chain = [(32, IMAGE_CHANNELS, w1), (16, w1, w2), (8, w2, w3), (4, w3, w4)]
        for scale, cin, cout in chain:
            params[f"down{scale}_w"] = _weight(rng, (cout, cin, 3, 3))
            params[f"down{scale}_gamma"] = _gamma(cout)
            params[f"down{scale}_beta"] = _beta(cout)
        params["score_w"] = _weight(rng, (1, w4, 4, 4))
        params["score_b"] = _bias(1)
        params["dec1_w"] = _weight(rng, (DECODER_WIDTH, w3, 3, 3))
        params["dec1_gamma"] = _gamma(DECODER_WIDTH)
        params["dec1_beta"] = _beta(DECODER_WIDTH)
        params["dec2_w"] = _weight(rng, (IMAGE_CHANNELS, DECODER_WIDTH, 3, 3))
        params["dec2_b"] = _bias(IMAGE_CHANNELS)
        return cls(params)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def forward(self, x: Tensor) -> tuple[Tensor, FeatureTaps, Tensor]:
        if x.shape[1:] != (IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE):
            raise ShapeError(
                f"discriminator input must be (N, {IMAGE_CHANNELS}, "
                f"{IMAGE_SIZE}, {IMAGE_SIZE}), got {x.shape}"
            )
        p = self.params
        taps: dict[int, Tensor] = {}
        for scale in (32, 16, 8, 4):
            x = engine.conv2d(x, p[f"down{scale}_w"], stride=2, padding=1)
            x = engine.batch_norm2d(x, p[f"down{scale}_gamma"], p[f"down{scale}_beta"])
            x = engine.leaky_relu(x, 0.2)
            if scale in TAP_SCALES:
                taps[scale] = x
        score = engine.conv2d(x, p["score_w"], bias=p["score_b"])

        d = engine.upsample_nearest2(taps[8])
        d = engine.conv2d(d, p["dec1_w"], padding=1)
        d = engine.batch_norm2d(d, p["dec1_gamma"], p["dec1_beta"])
        d = engine.leaky_relu(d, 0.2)
        d = engine.upsample_nearest2(d)
        recon = engine.tanh(engine.conv2d(d, p["dec2_w"], bias=p["dec2_b"], padding=1))
        return score, FeatureTaps("discriminator", taps), recon


def head_in_channels() -> dict[int, int]:
    """Channel count of the discriminator tap feeding each frequency head."""
    w1, w2, w3, _ = D_WIDTHS
    return {32: w1, 16: w2, 8: w3}


def build_models(seed: int) -> tuple[GeneratorNet, DiscriminatorNet, dict[int, HfdHead]]:
    """Deterministically initialize generator, discriminator and heads.

    Creation order (generator, discriminator, heads by ascending scale) is
    part of the seeding contract; changing it changes every seeded run.
    """
    rng = np.random.default_rng([seed, 0])
    gen = GeneratorNet.init(rng)
    disc = DiscriminatorNet.init(rng)
    channels = head_in_channels()
    heads = {
        scale: HfdHead.init(scale, channels[scale], rng, width=HEAD_WIDTH)
        for scale in sorted(channels)
    }
    return gen, disc, heads


def set_requires_grad(tensors, value: bool) -> None:
    for t in tensors:
        t.requires_grad = value
