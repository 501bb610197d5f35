"""Frequency-aware loss components and the hinge adversarial objectives.

Three composable pieces raise the networks' frequency awareness:

* a set of per-scale high-frequency discriminator heads scoring the summed
  detail bands of intermediate discriminator features (real vs fake),
* a frequency skip connection that re-injects the wavelet reconstruction
  of a generator feature as a residual before the next block,
* a high-frequency alignment penalty pulling the generator's detail maps
  toward the discriminator's detail maps computed on real images, which
  act as fixed targets (gradient never reaches the discriminator side).

All losses are mean-reduced so the unit coefficients of the combined
objective stay meaningful across feature scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import engine, wavelet
from .engine import ShapeError, Tensor

TAP_SCALES = (8, 16, 32)

# Sign of the generator's high-frequency adversarial term. -1 makes the
# generator ascend the frequency heads' realness score, consistent with the
# plain hinge generator loss; +1 would make it descend.
HFD_G_LOSS_SIGN = -1.0


@dataclass
class FeatureTaps:
    """Named intermediate activations at the 8/16/32 spatial scales."""

    source: str  # "generator" or "discriminator"
    taps: dict[int, Tensor]

    def __post_init__(self):
        if self.source not in ("generator", "discriminator"):
            raise ValueError(f"unknown tap source {self.source!r}")
        for scale, t in self.taps.items():
            if scale not in TAP_SCALES:
                raise ShapeError(f"tap scale {scale} not in {TAP_SCALES}")
            if t.shape[2] != scale or t.shape[3] != scale:
                raise ShapeError(
                    f"tap tagged scale {scale} has spatial shape "
                    f"{t.shape[2]}x{t.shape[3]}"
                )

    def scales(self) -> list[int]:
        return sorted(self.taps)

    def __getitem__(self, scale: int) -> Tensor:
        return self.taps[scale]

    def batch_size(self) -> int:
        return next(iter(self.taps.values())).shape[0]

    def detach(self) -> "FeatureTaps":
        return FeatureTaps(self.source, {s: t.detach() for s, t in self.taps.items()})


# ---------------------------------------------------------------------------
# hinge adversarial losses
# ---------------------------------------------------------------------------


def hinge_d_loss(real_scores: Tensor, fake_scores: Tensor) -> Tensor:
    """mean(relu(1 - real)) + mean(relu(1 + fake)) over per-sample scores."""
    ones_r = engine.full_like(real_scores, 1.0)
    ones_f = engine.full_like(fake_scores, 1.0)
    return engine.add(
        engine.relu_mean(engine.sub(ones_r, real_scores)),
        engine.relu_mean(engine.add(ones_f, fake_scores)),
    )


def hinge_g_loss(fake_scores: Tensor) -> Tensor:
    """-mean(fake scores): the generator ascends the discriminator's score."""
    return engine.scale(engine.mean_all(fake_scores), -1.0)


# ---------------------------------------------------------------------------
# high-frequency discriminator
# ---------------------------------------------------------------------------

# Strides of the two conv blocks per tap scale, chosen so the map entering
# the final 4x4 valid convolution is always 4x4.
_HEAD_STRIDES = {32: (2, 2), 16: (2, 1), 8: (1, 1)}


class HfdHead:
    """Score head for the summed high-frequency bands of one tap scale.

    Two (3x3 conv, batch norm, leaky relu 0.2) blocks followed by a 4x4
    valid convolution to a single score per sample. Heads are independent
    per scale; no weights are shared.
    """

    def __init__(self, scale: int, params: dict[str, Tensor]):
        if scale not in _HEAD_STRIDES:
            raise ValueError(f"no head recipe for scale {scale}")
        self.scale = scale
        self.params = params

    @classmethod
    def init(cls, scale: int, in_channels: int, rng: np.random.Generator, width: int = 32) -> "HfdHead":
        def w(shape):
            return Tensor(
                rng.standard_normal(shape, dtype=np.float32) * np.float32(0.02),
                requires_grad=True,
            )

        params = {
            "conv1_w": w((width, in_channels, 3, 3)),
            "bn1_gamma": Tensor(np.ones((1, width, 1, 1), np.float32), requires_grad=True),
            "bn1_beta": Tensor(np.zeros((1, width, 1, 1), np.float32), requires_grad=True),
            "conv2_w": w((width, width, 3, 3)),
            "bn2_gamma": Tensor(np.ones((1, width, 1, 1), np.float32), requires_grad=True),
            "bn2_beta": Tensor(np.zeros((1, width, 1, 1), np.float32), requires_grad=True),
            "out_w": w((1, width, 4, 4)),
            "out_b": Tensor(np.zeros((1, 1, 1, 1), np.float32), requires_grad=True),
        }
        return cls(scale, params)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def forward(self, hf: Tensor) -> Tensor:
        """Per-sample scalar scores (N, 1, 1, 1) for a half-scale detail map."""
        expected = self.scale // 2
        if hf.shape[2] != expected or hf.shape[3] != expected:
            raise ShapeError(
                f"head for scale {self.scale} expects {expected}x{expected} "
                f"detail maps, got {hf.shape[2]}x{hf.shape[3]}"
            )
        p = self.params
        s1, s2 = _HEAD_STRIDES[self.scale]
        x = engine.conv2d(hf, p["conv1_w"], stride=s1, padding=1)
        x = engine.batch_norm2d(x, p["bn1_gamma"], p["bn1_beta"])
        x = engine.leaky_relu(x, 0.2)
        x = engine.conv2d(x, p["conv2_w"], stride=s2, padding=1)
        x = engine.batch_norm2d(x, p["bn2_gamma"], p["bn2_beta"])
        x = engine.leaky_relu(x, 0.2)
        score_map = engine.conv2d(x, p["out_w"], bias=p["out_b"])
        if score_map.shape[1:] != (1, 1, 1):
            raise ShapeError(f"head produced a non-scalar score map {score_map.shape}")
        return score_map


def tap_high_freq(tap: Tensor) -> Tensor:
    """Summed detail bands of one feature tap (half the tap's resolution)."""
    return wavelet.high_freq_sum(wavelet.wave_pool(tap))


def _check_scale_sets(a: FeatureTaps, b: FeatureTaps, op: str) -> list[int]:
    if a.scales() != b.scales():
        raise ShapeError(f"{op}: scale sets differ, {a.scales()} vs {b.scales()}")
    return a.scales()


def hfd_scores(taps: FeatureTaps, heads: dict[int, HfdHead]) -> dict[int, Tensor]:
    """Per-scale head scores of the taps' high-frequency content."""
    out = {}
    for scale in taps.scales():
        head = heads.get(scale)
        if head is None:
            raise ShapeError(f"no high-frequency head for tap scale {scale}")
        out[scale] = head.forward(tap_high_freq(taps[scale]))
    return out


def hfd_losses(
    real_taps: FeatureTaps,
    fake_taps: FeatureTaps,
    heads: dict[int, HfdHead],
    g_sign: float = HFD_G_LOSS_SIGN,
) -> tuple[Tensor, Tensor]:
    """Discriminator- and generator-side frequency losses over all scales.

    Per scale the summed detail bands of the real and fake taps are scored
    by that scale's head; the hinge terms accumulate into the first result,
    ``g_sign`` times the mean fake score into the second.
    """
    scales = _check_scale_sets(real_taps, fake_taps, "hfd_losses")
    real_scores = hfd_scores(real_taps, heads)
    fake_scores = hfd_scores(fake_taps, heads)
    d_loss: Optional[Tensor] = None
    g_loss: Optional[Tensor] = None
    for scale in scales:
        d_term = hinge_d_loss(real_scores[scale], fake_scores[scale])
        g_term = engine.scale(engine.mean_all(fake_scores[scale]), g_sign)
        d_loss = d_term if d_loss is None else engine.add(d_loss, d_term)
        g_loss = g_term if g_loss is None else engine.add(g_loss, g_term)
    if d_loss is None:
        raise ShapeError("hfd_losses: no tap scales present")
    return d_loss, g_loss


# ---------------------------------------------------------------------------
# frequency skip connection
# ---------------------------------------------------------------------------


def fsc_apply(feature: Tensor) -> Tensor:
    """feature + unpool(pool(feature)): a same-resolution frequency residual.

    With exact Haar kernels the reconstruction is perfect, so this equals
    2x the feature; the identity doubles as the self-test that the skip
    preserves rather than destroys information.
    """
    return engine.add(feature, wavelet.wave_unpool(wavelet.wave_pool(feature)))


# ---------------------------------------------------------------------------
# high-frequency alignment
# ---------------------------------------------------------------------------


def hfa_per_scale(d_real_taps: FeatureTaps, g_taps: FeatureTaps) -> dict[int, Tensor]:
    """Per-scale L1 gaps between channel-averaged detail maps.

    The discriminator-side taps come from real images and act as constant
    targets: they are detached here, so no gradient can reach them.
    """
    scales = _check_scale_sets(d_real_taps, g_taps, "hfa_loss")
    if d_real_taps.batch_size() != g_taps.batch_size():
        raise ShapeError(
            f"hfa_loss: batch sizes differ, {d_real_taps.batch_size()} vs "
            f"{g_taps.batch_size()}"
        )
    out = {}
    for scale in scales:
        target = engine.channel_mean(tap_high_freq(d_real_taps[scale].detach()))
        produced = engine.channel_mean(tap_high_freq(g_taps[scale]))
        out[scale] = engine.l1_distance(target, produced)
    return out


def hfa_loss(d_real_taps: FeatureTaps, g_taps: FeatureTaps) -> Tensor:
    """Sum of the per-scale alignment gaps (scalar, >= 0)."""
    terms = list(hfa_per_scale(d_real_taps, g_taps).values())
    total = terms[0]
    for t in terms[1:]:
        total = engine.add(total, t)
    return total


# ---------------------------------------------------------------------------
# reconstruction loss and loss bookkeeping
# ---------------------------------------------------------------------------


def box_downsample(arr: np.ndarray, target: int) -> np.ndarray:
    """Area-average an (N, C, H, W) array down to target x target."""
    n, c, h, w = arr.shape
    if h < target or w < target or h % target or w % target or h != w:
        raise ShapeError(
            f"cannot area-downsample {h}x{w} to {target}x{target}: need a "
            "square multiple of the target"
        )
    f = h // target
    return arr.reshape(n, c, target, f, target, f).mean(axis=(3, 5))


def recon_loss(decoder_output: Tensor, real_image: Tensor) -> Tensor:
    """Mean absolute error against the area-downsampled real image.

    The target is data, not graph: gradient flows into the decoder side
    only.
    """
    m = decoder_output.shape[2]
    if decoder_output.shape[3] != m:
        raise ShapeError(f"decoder output must be square, got {decoder_output.shape}")
    target = Tensor(box_downsample(real_image.data, m))
    if target.shape != decoder_output.shape:
        raise ShapeError(
            f"downsampled real image {target.shape} does not match decoder "
            f"output {decoder_output.shape}"
        )
    return engine.l1_distance(decoder_output, target)


@dataclass
class LossReport:
    """Per-step values of every objective term, plus per-scale breakdowns."""

    l_d: float
    l_g: float
    l_d_hf: float = 0.0
    l_g_hf: float = 0.0
    l_align: float = 0.0
    l_recons: float = 0.0
    l_d_hf_by_scale: dict[int, float] = field(default_factory=dict)
    l_align_by_scale: dict[int, float] = field(default_factory=dict)

    FIELDS = ("l_d", "l_g", "l_d_hf", "l_g_hf", "l_align", "l_recons")

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in self.FIELDS)

    def validate(self) -> None:
        for name in self.FIELDS:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise FloatingPointError(f"loss term {name} is not finite: {v}")
        if self.l_align < 0:
            raise ValueError(f"l_align must be >= 0, got {self.l_align}")
        if self.l_recons < 0:
            raise ValueError(f"l_recons must be >= 0, got {self.l_recons}")


def total_losses(
    report: LossReport,
    use_hfd: bool = True,
    use_hfa: bool = True,
    use_fsc: bool = True,
) -> tuple[float, float, LossReport]:
    """Combine loss parts with unit coefficients under the ablation flags.

    d_total = l_d + l_recons (+ l_d_hf when the frequency heads are on);
    g_total = l_g (+ l_g_hf) (+ l_align). The skip-connection flag changes
    the generator's forward pass, not this arithmetic; it is accepted here
    only so one flag set describes a whole configuration.
    """
    del use_fsc
    report.validate()
    d_total = report.l_d + report.l_recons + (report.l_d_hf if use_hfd else 0.0)
    g_total = (
        report.l_g
        + (report.l_g_hf if use_hfd else 0.0)
        + (report.l_align if use_hfa else 0.0)
    )
    return d_total, g_total, report
