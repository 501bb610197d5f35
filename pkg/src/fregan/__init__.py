"""Frequency-aware GAN laboratory on a minimal autodiff tensor core.

The package bundles four layers:

* ``engine``: rank-4 float32 tensors with reverse-mode autodiff,
* ``wavelet`` / ``losses`` / ``models``: Haar band machinery, the
  frequency-aware loss components, and the toy GAN pair,
* ``data`` / ``training`` / ``spectral``: corpora, the alternating
  training loop with checkpoints, and power-spectrum diagnostics,
* ``estimators`` / ``cli``: a scikit-learn style facade and the
  command-line surface (train / sample / decompose / spectrum /
  compare / verify).
"""

from .data import DatasetSpec
from .engine import ShapeError, Tensor, backward, gradcheck
from .estimators import FreGANEstimator, HaarWaveletTransform2D
from .losses import FeatureTaps, HfdHead, LossReport, fsc_apply, hfa_loss, hfd_losses
from .models import DiscriminatorNet, GeneratorNet, build_models
from .training import Adam, TrainConfig, TrainResult, sample, train_loop, train_step
from .wavelet import WaveletBands, dwt_image, high_freq_sum, wave_pool, wave_unpool

__all__ = [
    "Adam",
    "DatasetSpec",
    "DiscriminatorNet",
    "FeatureTaps",
    "FreGANEstimator",
    "GeneratorNet",
    "HaarWaveletTransform2D",
    "HfdHead",
    "LossReport",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "WaveletBands",
    "backward",
    "build_models",
    "dwt_image",
    "fsc_apply",
    "gradcheck",
    "hfa_loss",
    "hfd_losses",
    "high_freq_sum",
    "sample",
    "train_loop",
    "train_step",
    "wave_pool",
    "wave_unpool",
]

__version__ = "0.1.0"
