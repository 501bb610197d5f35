"""Frequency diagnostics: power spectra, radial profiles, corpus distances.

The pipeline follows the usual GAN spectral-analysis recipe: images are
converted to grayscale, Fourier transformed per image, the squared
magnitudes are floored and log10-scaled, and the corpus average is
reported either as a DC-centered 2-d map, as a radial (azimuthally
integrated) profile with per-bin variances, or as a 0-degree slice.
Corpus-to-corpus distance is the mean squared gap between radial mean
profiles, with the per-bin gaps and the high-frequency half's mean gap
reported alongside (missing high frequencies are what the diagnostics
exist to expose).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import wavelet
from .engine import ShapeError, Tensor

LOG_FLOOR_EPS = 1e-10
GRAY_WEIGHTS = (0.2989, 0.5870, 0.1140)


@dataclass
class Spectrum2D:
    """Mean log10 power over a corpus, DC at the center cell."""

    values: np.ndarray  # (size, size) float64
    count: int

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass
class SpectrumProfile:
    """Radial bins 0..size/2 of (mean, variance) log-power after integration."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.variance.shape:
            raise ShapeError("profile mean and variance must align")

    @property
    def bins(self) -> int:
        return self.mean.shape[0]


@dataclass
class SpectrumDistance:
    """Scalar distance plus the diagnostics behind it."""

    value: float
    per_bin_gap: np.ndarray  # absolute gap per radial bin
    high_half_gap: float  # mean absolute gap over the upper half of the bins


def to_grayscale(images: np.ndarray) -> np.ndarray:
    """(n, 3, s, s) -> (n, s, s) luma."""
    r, g, b = GRAY_WEIGHTS
    return r * images[:, 0] + g * images[:, 1] + b * images[:, 2]


def power_spectrum_2d(images: np.ndarray) -> Spectrum2D:
    """Average log10 power spectrum of a corpus of square RGB images."""
    if images.ndim != 4 or images.shape[0] < 1:
        raise ValueError(f"need a non-empty (n, 3, s, s) corpus, got {images.shape}")
    if images.shape[2] != images.shape[3]:
        raise ShapeError(f"images must be square, got {images.shape[2:]}x")
    gray = to_grayscale(images.astype(np.float64))
    spectra = np.abs(np.fft.fft2(gray)) ** 2
    logp = np.log10(spectra + LOG_FLOOR_EPS)
    mean = np.fft.fftshift(logp.mean(axis=0))
    return Spectrum2D(values=mean, count=images.shape[0])


def _radial_bin_indices(size: int) -> np.ndarray:
    c = size // 2
    coords = np.arange(size) - c
    dist = np.sqrt(coords[:, None] ** 2 + coords[None, :] ** 2)
    return np.minimum(np.rint(dist).astype(int), size // 2)


def azimuthal_average(spec: Spectrum2D) -> SpectrumProfile:
    """Mean and variance of the spectrum over annuli of rounded radius.

    Every cell lands in exactly one bin; radii beyond size/2 (the corners)
    clamp into the last bin.
    """
    size = spec.size
    bins = _radial_bin_indices(size).ravel()
    values = spec.values.ravel()
    nbins = size // 2 + 1
    counts = np.bincount(bins, minlength=nbins).astype(np.float64)
    sums = np.bincount(bins, weights=values, minlength=nbins)
    mean = sums / counts
    sq = np.bincount(bins, weights=values**2, minlength=nbins)
    variance = np.maximum(sq / counts - mean**2, 0.0)
    return SpectrumProfile(mean=mean, variance=variance)


def spectrum_slice(spec: Spectrum2D) -> np.ndarray:
    """The 0-degree slice: center row from DC out to the Nyquist column."""
    c = spec.size // 2
    row = spec.values[c]
    # frequencies 0..size/2-1 sit right of center; Nyquist wraps to column 0
    return np.concatenate([row[c:], row[:1]])


def spectrum_distance(a: SpectrumProfile, b: SpectrumProfile) -> SpectrumDistance:
    """Mean squared gap of the mean profiles (a pseudo-metric)."""
    if a.bins != b.bins:
        raise ShapeError(f"profiles have {a.bins} vs {b.bins} bins")
    gap = a.mean - b.mean
    per_bin = np.abs(gap)
    half = a.bins // 2
    return SpectrumDistance(
        value=float(np.mean(gap**2)),
        per_bin_gap=per_bin,
        high_half_gap=float(np.mean(per_bin[half:])),
    )


def band_energy_stats(images: np.ndarray) -> dict[str, float]:
    """Mean fraction of pixel energy in each wavelet band over a corpus."""
    if images.ndim != 4:
        raise ValueError(f"need an (n, c, h, w) corpus, got {images.shape}")
    bands = wavelet.wave_pool(Tensor(images.reshape(-1, *images.shape[1:])))
    total = float(np.sum(images.astype(np.float64) ** 2))
    if total == 0.0:
        raise ValueError("cannot compute band fractions of an all-zero corpus")
    return {
        name: float(np.sum(t.data.astype(np.float64) ** 2)) / total
        for name, t in zip(wavelet.BAND_NAMES, bands)
    }


# ---------------------------------------------------------------------------
# serialization used by the CLI
# ---------------------------------------------------------------------------


def profile_to_csv(profile: SpectrumProfile) -> str:
    lines = ["bin,mean,variance"]
    for i in range(profile.bins):
        lines.append(f"{i},{float(profile.mean[i])!r},{float(profile.variance[i])!r}")
    return "\n".join(lines) + "\n"


def slice_to_csv(slc: np.ndarray) -> str:
    lines = ["bin,log_power"]
    for i, v in enumerate(slc):
        lines.append(f"{i},{float(v)!r}")
    return "\n".join(lines) + "\n"


def spectrum_to_csv(spec: Spectrum2D) -> str:
    return "\n".join(",".join(repr(float(v)) for v in row) for row in spec.values) + "\n"


def gap_to_csv(dist: SpectrumDistance) -> str:
    lines = ["bin,abs_gap"]
    for i, v in enumerate(dist.per_bin_gap):
        lines.append(f"{i},{float(v)!r}")
    return "\n".join(lines) + "\n"


def heatmap_u8(spec: Spectrum2D) -> np.ndarray:
    """Linear map of [floor, max] to [0, 255] for a grayscale PNG."""
    floor = np.log10(LOG_FLOOR_EPS)
    top = float(spec.values.max())
    if top <= floor:
        return np.zeros(spec.values.shape, np.uint8)
    scaled = (spec.values - floor) / (top - floor)
    return np.clip(np.rint(scaled * 255.0), 0, 255).astype(np.uint8)
