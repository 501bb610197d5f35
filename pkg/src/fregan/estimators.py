"""Scikit-learn style wrappers so the lab composes with the wider ecosystem.

Two estimator-shaped surfaces make sense here and are provided: the
trainer (``fit`` on an image array, ``sample`` to generate) and the
single-level wavelet decomposition (``transform`` / ``inverse_transform``).
Everything else in the package is a library of functions and stays that
way; these wrappers validate plain numpy input, delegate to the internals,
and expose fitted state under the usual trailing-underscore names.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import data, losses, models, spectral, training, wavelet
from .data import DatasetSpec
from .engine import Tensor
from .losses import LossReport


def check_images(X, size: Optional[int] = None, channels: Optional[int] = None) -> np.ndarray:
    """Validate an (n, c, h, w) float image array and return it as float32."""
    arr = np.asarray(X)
    if arr.ndim != 4:
        raise ValueError(f"expected images shaped (n, c, h, w), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("need at least one image")
    if channels is not None and arr.shape[1] != channels:
        raise ValueError(f"expected {channels} channels, got {arr.shape[1]}")
    if size is not None and arr.shape[2:] != (size, size):
        raise ValueError(f"expected {size}x{size} images, got {arr.shape[2:]}")
    if not np.issubdtype(arr.dtype, np.floating):
        raise ValueError(f"expected float images in [-1, 1], got dtype {arr.dtype}")
    return np.ascontiguousarray(arr, dtype=np.float32)


class HaarWaveletTransform2D(TransformerMixin, BaseEstimator):
    """Single-level Haar decomposition as a stateless transformer.

    ``transform`` stacks the four bands along channels: an (n, c, h, w)
    input becomes (n, 4c, h/2, w/2) ordered LL, LH, HL, HH;
    ``inverse_transform`` reconstructs exactly.
    """

    def fit(self, X, y=None):
        X = check_images(X)
        self.n_channels_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        X = check_images(X)
        bands = wavelet.wave_pool(Tensor(X))
        return np.concatenate([t.data for t in bands], axis=1)

    def inverse_transform(self, Xt) -> np.ndarray:
        arr = check_images(Xt)
        if arr.shape[1] % 4:
            raise ValueError(
                f"band stack must have 4k channels (LL/LH/HL/HH), got {arr.shape[1]}"
            )
        c = arr.shape[1] // 4
        parts = [Tensor(arr[:, i * c : (i + 1) * c]) for i in range(4)]
        return wavelet.wave_unpool(wavelet.WaveletBands(*parts)).data


class FreGANEstimator(BaseEstimator):
    """Frequency-aware GAN trainer with a fit/sample surface.

    ``fit`` trains on an (n, 3, 64, 64) float array in [-1, 1] without
    touching the filesystem; ``sample`` generates images from the fitted
    generator. ``score`` returns the negated radial spectrum distance
    between generated samples and the given corpus (higher is better), so
    the estimator slots into model-selection utilities.
    """

    def __init__(
        self,
        iterations: int = 200,
        batch_size: int = 4,
        lr: float = 2e-4,
        beta1: float = 0.5,
        beta2: float = 0.999,
        seed: int = 0,
        use_hfd: bool = True,
        use_hfa: bool = True,
        use_fsc: bool = True,
    ):
        self.iterations = iterations
        self.batch_size = batch_size
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.seed = seed
        self.use_hfd = use_hfd
        self.use_hfa = use_hfa
        self.use_fsc = use_fsc

    def _config(self, n: int, size: int) -> training.TrainConfig:
        # the dataset spec records provenance only; images are supplied directly
        spec = DatasetSpec("directory", n=n, size=size, seed=self.seed, path="<memory>")
        return training.TrainConfig(
            dataset=spec,
            iterations=self.iterations,
            seed=self.seed,
            batch_size=self.batch_size,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            use_hfd=self.use_hfd,
            use_hfa=self.use_hfa,
            use_fsc=self.use_fsc,
        )

    def fit(self, X, y=None):
        X = check_images(X, size=models.IMAGE_SIZE, channels=3)
        if np.max(np.abs(X)) > 1.0 + 1e-6:
            raise ValueError("images must lie in [-1, 1]")
        config = self._config(X.shape[0], X.shape[2])
        gen, disc, heads = models.build_models(config.seed)
        opt_g = training.Adam(
            training._named_g_params(gen), config.lr, config.beta1, config.beta2
        )
        opt_d = training.Adam(
            training._named_d_params(disc, heads), config.lr, config.beta1, config.beta2
        )
        batcher = data.batches(X, config.batch_size, config.seed)
        history: list[LossReport] = []
        for t in range(1, config.iterations + 1):
            history.append(
                training.train_step(next(batcher), gen, disc, heads, opt_g, opt_d, config, t)
            )
        self.generator_ = gen
        self.history_ = history
        self.config_ = config
        self.n_images_ = X.shape[0]
        return self

    def _check_fitted(self):
        if not hasattr(self, "generator_"):
            raise RuntimeError("this estimator is not fitted; call fit first")

    def sample(self, n: int, seed: Optional[int] = None) -> np.ndarray:
        """Generate (n, 3, 64, 64) images in [-1, 1], deterministic per seed."""
        self._check_fitted()
        rng = np.random.default_rng(self.seed if seed is None else seed)
        out = []
        produced = 0
        while produced < n:
            chunk = min(8, n - produced)
            z = rng.standard_normal((chunk, models.LATENT_DIM, 1, 1), dtype=np.float32)
            images, _ = self.generator_.forward(Tensor(z), fsc_enabled=self.use_fsc)
            out.append(images.data)
            produced += chunk
        if not out:
            return np.empty((0, 3, models.IMAGE_SIZE, models.IMAGE_SIZE), np.float32)
        return np.concatenate(out, axis=0)

    def score(self, X, y=None) -> float:
        """Negated radial spectrum distance between samples and ``X``."""
        self._check_fitted()
        X = check_images(X, size=models.IMAGE_SIZE, channels=3)
        generated = self.sample(max(16, X.shape[0]), seed=self.seed + 1)
        prof_x = spectral.azimuthal_average(spectral.power_spectrum_2d(X))
        prof_g = spectral.azimuthal_average(spectral.power_spectrum_2d(generated))
        return -spectral.spectrum_distance(prof_x, prof_g).value
