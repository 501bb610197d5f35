"""Haar wavelet transform: kernels, reconstruction, Parseval, band semantics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fregan import engine, wavelet
from fregan.engine import ShapeError, Tensor
from fregan.wavelet import WaveletBands, wave_pool, wave_unpool


def feature_maps(max_side=8):
    shapes = st.tuples(
        st.integers(1, 2), st.integers(1, 3),
        st.integers(1, max_side // 2).map(lambda v: 2 * v),
        st.integers(1, max_side // 2).map(lambda v: 2 * v),
    )
    return shapes.flatmap(
        lambda s: arrays(np.float32, s, elements=st.floats(-4, 4, width=32))
    )


KERNELS = {
    "ll": np.array([[0.5, 0.5], [0.5, 0.5]]),
    "lh": np.array([[-0.5, 0.5], [-0.5, 0.5]]),
    "hl": np.array([[-0.5, -0.5], [0.5, 0.5]]),
    "hh": np.array([[0.5, -0.5], [-0.5, 0.5]]),
}


def block_pool_oracle(x):
    """Per-2x2-block dot products against each kernel (float64 loops)."""
    n, c, h, w = x.shape
    out = {k: np.zeros((n, c, h // 2, w // 2)) for k in KERNELS}
    for name, ker in KERNELS.items():
        for b in range(n):
            for ch in range(c):
                for i in range(h // 2):
                    for j in range(w // 2):
                        block = x[b, ch, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                        out[name][b, ch, i, j] = float(np.sum(block * ker))
    return out


def block_unpool_oracle(bands):
    """Basis expansion: each output 2x2 block is the kernel-weighted band sum."""
    n, c, hh, ww = bands["ll"].shape
    out = np.zeros((n, c, 2 * hh, 2 * ww))
    for name, ker in KERNELS.items():
        for b in range(n):
            for ch in range(c):
                for i in range(hh):
                    for j in range(ww):
                        out[b, ch, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2] += (
                            bands[name][b, ch, i, j] * ker
                        )
    return out


def checkerboard(n, c, h, w, a, b):
    tile = np.array([[a, b], [b, a]], np.float32)
    return np.tile(tile, (h // 2, w // 2))[None, None].repeat(c, 1).repeat(n, 0)


class TestKernels:
    def test_exact_values(self):
        np.testing.assert_array_equal(wavelet.HAAR_LL, KERNELS["ll"].astype(np.float32))
        np.testing.assert_array_equal(wavelet.HAAR_LH, KERNELS["lh"].astype(np.float32))
        np.testing.assert_array_equal(wavelet.HAAR_HL, KERNELS["hl"].astype(np.float32))
        np.testing.assert_array_equal(wavelet.HAAR_HH, KERNELS["hh"].astype(np.float32))

    def test_orthonormal_basis(self):
        flat = np.stack([k.ravel() for k in KERNELS.values()])
        gram = flat @ flat.T
        np.testing.assert_array_equal(gram, np.eye(4))

    def test_kernels_not_trainable(self):
        x = Tensor(np.random.default_rng(0).standard_normal((1, 2, 4, 4)).astype(np.float32),
                   requires_grad=True)
        bands = wave_pool(x)
        engine.backward(engine.mean_all(wavelet.high_freq_sum(bands)))
        assert x.grad is not None
        for name in wavelet.BAND_NAMES:
            k = wavelet._band_weight(name, 2)
            assert not k.requires_grad
            assert k.grad is None


class TestWavePool:
    def test_constant_image(self):
        c = 0.7
        x = Tensor(np.full((2, 3, 4, 4), c, np.float32))
        bands = wave_pool(x)
        np.testing.assert_allclose(bands.ll.data, 2 * c, atol=1e-6)
        for t in (bands.lh, bands.hl, bands.hh):
            np.testing.assert_allclose(t.data, 0.0, atol=1e-6)

    def test_checkerboard_tile2(self):
        a, b = 1.25, -0.5
        x = Tensor(checkerboard(1, 2, 6, 6, a, b))
        bands = wave_pool(x)
        np.testing.assert_allclose(bands.ll.data, a + b, atol=1e-6)
        np.testing.assert_allclose(bands.lh.data, 0.0, atol=1e-6)
        np.testing.assert_allclose(bands.hl.data, 0.0, atol=1e-6)
        np.testing.assert_allclose(bands.hh.data, a - b, atol=1e-6)

    def test_matches_block_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        bands = wave_pool(Tensor(x))
        ref = block_pool_oracle(x)
        for name, t in zip(wavelet.BAND_NAMES, bands):
            np.testing.assert_allclose(t.data, ref[name], atol=1e-5)

    def test_odd_dims_rejected(self):
        x = Tensor(np.zeros((1, 1, 5, 4), np.float32))
        with pytest.raises(ShapeError, match="pad"):
            wave_pool(x)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((1, 2, 6, 6)).astype(np.float32)
        y = rng.standard_normal((1, 2, 6, 6)).astype(np.float32)
        a, b = 0.3, -1.7
        mixed = wave_pool(Tensor(a * x + b * y))
        px, py = wave_pool(Tensor(x)), wave_pool(Tensor(y))
        for m, tx, ty in zip(mixed, px, py):
            np.testing.assert_allclose(m.data, a * tx.data + b * ty.data, atol=1e-5)


class TestWaveUnpool:
    def test_perfect_reconstruction(self):
        rng = np.random.default_rng(3)
        for shape in [(1, 1, 2, 2), (2, 3, 8, 8), (1, 4, 6, 10), (3, 2, 16, 16)]:
            x = rng.standard_normal(shape).astype(np.float32)
            rec = wave_unpool(wave_pool(Tensor(x)))
            assert np.max(np.abs(rec.data - x)) < 1e-5

    def test_constant_roundtrip_from_ll(self):
        c = -0.4
        shape = (1, 2, 3, 3)
        bands = WaveletBands(
            Tensor(np.full(shape, 2 * c, np.float32)),
            Tensor(np.zeros(shape, np.float32)),
            Tensor(np.zeros(shape, np.float32)),
            Tensor(np.zeros(shape, np.float32)),
        )
        out = wave_unpool(bands)
        np.testing.assert_allclose(out.data, c, atol=1e-6)

    def test_matches_basis_expansion_oracle(self):
        rng = np.random.default_rng(4)
        arrs = {k: rng.standard_normal((2, 2, 3, 3)).astype(np.float32) for k in KERNELS}
        bands = WaveletBands(*(Tensor(arrs[k]) for k in wavelet.BAND_NAMES))
        out = wave_unpool(bands)
        np.testing.assert_allclose(out.data, block_unpool_oracle(arrs), atol=1e-5)

    def test_mismatched_band_shapes_rejected(self):
        good = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        bad = Tensor(np.zeros((1, 1, 3, 3), np.float32))
        with pytest.raises(ShapeError):
            wave_unpool(WaveletBands(good, good, good, bad))

    def test_parseval(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
            bands = wave_pool(Tensor(x))
            e_in = float(np.sum(x.astype(np.float64) ** 2))
            e_bands = sum(float(np.sum(t.data.astype(np.float64) ** 2)) for t in bands)
            assert abs(e_in - e_bands) <= 1e-4 * e_in

    @settings(max_examples=40, deadline=None)
    @given(feature_maps())
    def test_property_roundtrip_and_parseval(self, x):
        bands = wave_pool(Tensor(x))
        rec = wave_unpool(bands)
        assert np.max(np.abs(rec.data - x)) < 1e-5
        e_in = float(np.sum(x.astype(np.float64) ** 2))
        e_bands = sum(float(np.sum(t.data.astype(np.float64) ** 2)) for t in bands)
        assert abs(e_in - e_bands) <= 1e-4 * e_in + 1e-8


class TestHighFreqSum:
    def test_constant_gives_zero(self):
        bands = wave_pool(Tensor(np.full((1, 2, 4, 4), 3.3, np.float32)))
        hf = wavelet.high_freq_sum(bands)
        np.testing.assert_allclose(hf.data, 0.0, atol=1e-5)

    def test_checkerboard_gives_difference(self):
        a, b = 0.9, -0.1
        bands = wave_pool(Tensor(checkerboard(1, 1, 4, 4, a, b)))
        hf = wavelet.high_freq_sum(bands)
        np.testing.assert_allclose(hf.data, a - b, atol=1e-6)

    def test_is_elementwise_sum(self):
        rng = np.random.default_rng(6)
        arrs = [rng.standard_normal((1, 2, 3, 3)).astype(np.float32) for _ in range(4)]
        bands = WaveletBands(*(Tensor(a) for a in arrs))
        hf = wavelet.high_freq_sum(bands)
        np.testing.assert_allclose(hf.data, arrs[1] + arrs[2] + arrs[3], atol=1e-6)


class TestDwtImage:
    def test_single_level_equals_wave_pool(self):
        rng = np.random.default_rng(7)
        x = Tensor(rng.standard_normal((1, 3, 8, 8)).astype(np.float32))
        levels = wavelet.dwt_image(x, 1)
        direct = wave_pool(x)
        assert len(levels) == 1
        for a, b in zip(levels[0], direct):
            np.testing.assert_array_equal(a.data, b.data)

    def test_constant_image_all_high_bands_zero(self):
        x = Tensor(np.full((1, 1, 8, 8), 0.25, np.float32))
        for bands in wavelet.dwt_image(x, 2):
            for t in (bands.lh, bands.hl, bands.hh):
                np.testing.assert_allclose(t.data, 0.0, atol=1e-6)

    def test_two_level_reconstruction(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((1, 3, 12, 12)).astype(np.float32)
        levels = wavelet.dwt_image(Tensor(x), 2)
        rec = wavelet.reconstruct_dwt(levels)
        assert np.max(np.abs(rec.data - x)) < 1e-5

    def test_divisibility_enforced(self):
        x = Tensor(np.zeros((1, 1, 6, 6), np.float32))
        with pytest.raises(ShapeError, match="divisible"):
            wavelet.dwt_image(x, 2)


class TestGradientFlow:
    def test_pool_unpool_gradient(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))

        def f(t):
            return engine.mean_all(engine.tanh(wave_unpool(wave_pool(t))))

        assert engine.gradcheck(f, [x]).max_error < 1e-3

    def test_kernel_perturbation_hook_breaks_reconstruction(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((1, 1, 4, 4)).astype(np.float32)
        with wavelet.kernel_perturbation(0.05):
            rec = wave_unpool(wave_pool(Tensor(x)))
            assert np.max(np.abs(rec.data - x)) > 1e-3
        rec = wave_unpool(wave_pool(Tensor(x)))
        assert np.max(np.abs(rec.data - x)) < 1e-5
