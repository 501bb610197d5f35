"""Haar wavelet pooling and unpooling over (N, C, H, W) feature maps.

One decomposition level splits a feature map into four half-resolution
bands: LL (coarse structure) and LH/HL/HH (detail). Pooling is a grouped
stride-2 convolution with four fixed 2x2 kernels, unpooling the sum of the
four grouped transposed convolutions with the same kernels. The kernels
form an orthonormal basis of R^4, which gives perfect reconstruction and
energy preservation; both properties are load-bearing and tested.

Kernel weights are never trainable: gradient flows through the transform
but never into it.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import engine
from .engine import ShapeError, Tensor

# Outer products of the low-pass (1/sqrt2)[1, 1] and high-pass (1/sqrt2)[-1, 1]
# filters; exact dyadic values in float32.
HAAR_LL = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=np.float32)
HAAR_LH = np.array([[-0.5, 0.5], [-0.5, 0.5]], dtype=np.float32)
HAAR_HL = np.array([[-0.5, -0.5], [0.5, 0.5]], dtype=np.float32)
HAAR_HH = np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=np.float32)

BAND_NAMES = ("ll", "lh", "hl", "hh")

_BASE_KERNELS = {"ll": HAAR_LL, "lh": HAAR_LH, "hl": HAAR_HL, "hh": HAAR_HH}

# fault-injection offset used by the verification CLI; 0.0 in normal operation
_kernel_offset = 0.0
_kernel_cache: dict[tuple[str, int, float], Tensor] = {}


def _band_weight(band: str, channels: int) -> Tensor:
    """The 2x2 kernel tiled to a (C, 1, 2, 2) grouped-conv weight."""
    key = (band, channels, _kernel_offset)
    cached = _kernel_cache.get(key)
    if cached is None:
        k = _BASE_KERNELS[band] + np.float32(_kernel_offset)
        w = np.broadcast_to(k, (channels, 1, 2, 2))
        cached = Tensor(np.ascontiguousarray(w), requires_grad=False)
        _kernel_cache[key] = cached
    return cached


@contextlib.contextmanager
def kernel_perturbation(eps: float) -> Iterator[None]:
    """Temporarily bias every Haar kernel by ``eps``.

    Fault-injection hook for the verification suite: a nonzero ``eps`` must
    make the reconstruction checks fail. Not for normal use.
    """
    global _kernel_offset
    previous = _kernel_offset
    _kernel_offset = float(eps)
    try:
        yield
    finally:
        _kernel_offset = previous


@dataclass
class WaveletBands:
    """The four frequency components of one decomposition level."""

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def __iter__(self):
        return iter((self.ll, self.lh, self.hl, self.hh))

    def shape_check(self) -> None:
        shapes = {t.shape for t in self}
        if len(shapes) != 1:
            raise ShapeError(f"wavelet bands must share one shape, got {sorted(shapes)}")


def wave_pool(x: Tensor) -> WaveletBands:
    """Decompose ``x`` into LL/LH/HL/HH bands at half resolution.

    H and W must be even; odd inputs are rejected so the caller can pad
    explicitly (silent padding would break perfect reconstruction).
    """
    _, c, h, w = x.shape
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise ShapeError(
            f"wave_pool needs even H and W >= 2, got {h}x{w}; pad the input "
            "to even dimensions first"
        )
    bands = [
        engine.conv2d(x, _band_weight(name, c), stride=2, groups=c)
        for name in BAND_NAMES
    ]
    return WaveletBands(*bands)


def wave_unpool(bands: WaveletBands) -> Tensor:
    """Reconstruct the double-resolution feature map from its four bands."""
    bands.shape_check()
    c = bands.ll.shape[1]
    parts = [
        engine.conv2d_transpose(t, _band_weight(name, c), stride=2, groups=c)
        for name, t in zip(BAND_NAMES, bands)
    ]
    return engine.add(engine.add(parts[0], parts[1]), engine.add(parts[2], parts[3]))


def high_freq_sum(bands: WaveletBands) -> Tensor:
    """LH + HL + HH: every detail component of one level, summed."""
    bands.shape_check()
    return engine.add(engine.add(bands.lh, bands.hl), bands.hh)


def dwt_image(image: Tensor, levels: int) -> list[WaveletBands]:
    """Recursive decomposition: level i+1 decomposes level i's LL band.

    Spatial dims must be divisible by 2**levels. The result is lossless;
    :func:`reconstruct_dwt` inverts it.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    _, _, h, w = image.shape
    step = 2**levels
    if h % step or w % step:
        raise ShapeError(
            f"dwt_image with levels={levels} needs H and W divisible by "
            f"{step}, got {h}x{w}"
        )
    out: list[WaveletBands] = []
    current = image
    for _ in range(levels):
        bands = wave_pool(current)
        out.append(bands)
        current = bands.ll
    return out


def reconstruct_dwt(levels: list[WaveletBands]) -> Tensor:
    """Invert :func:`dwt_image`."""
    if not levels:
        raise ValueError("reconstruct_dwt needs at least one level")
    current = wave_unpool(levels[-1])
    for bands in reversed(levels[:-1]):
        current = wave_unpool(WaveletBands(current, bands.lh, bands.hl, bands.hh))
    return current
