"""Image corpora with controllable frequency content, plus directory ingestion.

Synthetic kinds replace photographic datasets: the spectral properties of
sinusoid gratings and checkerboards are known analytically, which turns
"does the model produce high frequencies" into a checkable statement.
All corpora are (n, 3, size, size) float32 arrays in [-1, 1], deterministic
functions of (spec, seed).
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from PIL import Image

KINDS = ("sinusoid-mix", "checkerboard", "gradient-blobs", "directory")
VALID_SIZES = (32, 64, 128)

KIND_IDS = {name: i for i, name in enumerate(KINDS)}


@dataclass
class DatasetSpec:
    kind: str
    n: int
    size: int
    seed: int
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; choose from {KINDS}")
        if self.size not in VALID_SIZES:
            raise ValueError(f"size must be one of {VALID_SIZES}, got {self.size}")
        if self.n < 1:
            raise ValueError(f"need n >= 1 images, got {self.n}")
        if self.kind == "directory" and not self.path:
            raise ValueError("directory datasets need a path")


def sinusoid_image(size: int, k: float, theta: float, phase: float = 0.0) -> np.ndarray:
    """One grating of |frequency| k cycles per image at angle theta, in [-1, 1]."""
    coords = np.arange(size, dtype=np.float64)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    arg = 2.0 * np.pi * k * (np.cos(theta) * xx + np.sin(theta) * yy) / size + phase
    return np.sin(arg).astype(np.float32)


def checkerboard_image(size: int, tile: int, a: float, b: float) -> np.ndarray:
    """Checkerboard of period ``tile``: squares of side tile/2 alternate a/b.

    A tile-2 board alternates per pixel, so every aligned 2x2 block is
    [[a, b], [b, a]].
    """
    if tile < 2 or tile % 2:
        raise ValueError(f"tile must be an even period >= 2, got {tile}")
    idx = np.arange(size) // (tile // 2)
    mask = (idx[:, None] + idx[None, :]) % 2
    return np.where(mask == 0, np.float32(a), np.float32(b))


def _to_rgb(gray: np.ndarray, gains: np.ndarray) -> np.ndarray:
    return np.clip(gray[None, :, :] * gains[:, None, None], -1.0, 1.0).astype(np.float32)


def synth_dataset(spec: DatasetSpec) -> np.ndarray:
    """Generate the synthetic corpus described by ``spec``."""
    if spec.kind == "directory":
        return load_image_dir(spec.path, spec.size)
    rng = np.random.default_rng(spec.seed)
    size = spec.size
    images = np.empty((spec.n, 3, size, size), np.float32)
    for i in range(spec.n):
        if spec.kind == "sinusoid-mix":
            n_waves = int(rng.integers(1, 4))
            gray = np.zeros((size, size), np.float32)
            for _ in range(n_waves):
                k = int(rng.integers(1, size // 4 + 1))
                theta = float(rng.uniform(0.0, np.pi))
                phase = float(rng.uniform(0.0, 2.0 * np.pi))
                amp = float(rng.uniform(0.4, 1.0))
                gray += amp * sinusoid_image(size, k, theta, phase)
            gray /= max(1.0, float(np.max(np.abs(gray))))
            gains = rng.uniform(0.6, 1.0, 3).astype(np.float32)
            images[i] = _to_rgb(gray, gains)
        elif spec.kind == "checkerboard":
            tile = int(rng.choice([2, 4, 8]))
            a = float(rng.uniform(0.2, 1.0))
            b = float(rng.uniform(-1.0, -0.2))
            gray = checkerboard_image(size, tile, a, b)
            gains = rng.uniform(0.7, 1.0, 3).astype(np.float32)
            images[i] = _to_rgb(gray, gains)
        else:  # gradient-blobs
            direction = float(rng.uniform(0.0, 2.0 * np.pi))
            coords = np.linspace(-1.0, 1.0, size)
            yy, xx = np.meshgrid(coords, coords, indexing="ij")
            gray = (np.cos(direction) * xx + np.sin(direction) * yy).astype(np.float32)
            for _ in range(int(rng.integers(2, 5))):
                cy, cx = rng.uniform(-0.8, 0.8, 2)
                radius = float(rng.uniform(0.1, 0.4))
                value = float(rng.uniform(-1.0, 1.0))
                disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
                gray = np.where(disc, np.float32(value), gray)
            gains = rng.uniform(0.7, 1.0, 3).astype(np.float32)
            images[i] = _to_rgb(gray, gains)
    return images


def box_resize(arr: np.ndarray, size: int) -> np.ndarray:
    """Area-average resize of one (H, W, 3) uint8/float image to size x size."""
    img = Image.fromarray(arr) if arr.dtype == np.uint8 else Image.fromarray(
        np.clip(arr, 0, 255).astype(np.uint8)
    )
    return np.asarray(img.resize((size, size), resample=Image.BOX))


def load_image_dir(path: str, size: int) -> np.ndarray:
    """Load every PNG/PPM under ``path``, area-resized and mapped to [-1, 1].

    Files are taken in sorted name order so corpora are reproducible.
    """
    try:
        names = sorted(
            f for f in os.listdir(path)
            if f.lower().endswith((".png", ".ppm"))
        )
    except OSError as exc:
        raise ValueError(f"cannot read image directory {path}: {exc}") from exc
    if not names:
        raise ValueError(f"no PNG or PPM images in {path}")
    out = np.empty((len(names), 3, size, size), np.float32)
    for i, name in enumerate(names):
        full = os.path.join(path, name)
        try:
            with Image.open(full) as img:
                rgb = img.convert("RGB")
                resized = rgb.resize((size, size), resample=Image.BOX)
                arr = np.asarray(resized, dtype=np.float32)
        except OSError as exc:
            raise ValueError(f"unreadable image file {full}: {exc}") from exc
        out[i] = (arr / np.float32(127.5) - np.float32(1.0)).transpose(2, 0, 1)
    return out


def to_uint8(images: np.ndarray) -> np.ndarray:
    """Map [-1, 1] float images linearly onto [0, 255]."""
    return np.clip(np.rint((images + 1.0) * 127.5), 0, 255).astype(np.uint8)


def save_png(image: np.ndarray, path: str) -> None:
    """Write one (3, H, W) [-1, 1] image as an 8-bit RGB PNG."""
    Image.fromarray(to_uint8(image).transpose(1, 2, 0)).save(path, format="PNG")


def batches(images: np.ndarray, batch: int, seed: int) -> Iterator[np.ndarray]:
    """Seeded shuffled-epoch batches, wrapping across epochs indefinitely.

    Epoch remainders carry over, so over e epochs every image appears
    exactly e times. The shuffling stream is np.random.default_rng([seed, 1]);
    the plain-GAN reference replicates this protocol and must keep matching.
    """
    n = images.shape[0]
    if batch > n:
        raise ValueError(f"batch size {batch} exceeds corpus size {n}")
    rng = np.random.default_rng([seed, 1])
    buf: list[int] = []
    while True:
        if len(buf) < batch:
            buf.extend(rng.permutation(n).tolist())
        idx, buf = buf[:batch], buf[batch:]
        yield images[idx]
