"""Plain hinge-GAN trainer written directly in numpy with hand-derived backprop.

This module is deliberately independent of the autodiff engine: it imports
nothing from it and re-derives every forward and backward formula by hand.
It implements the exact baseline configuration (hinge adversarial losses
plus the discriminator's self-supervised reconstruction term, no frequency
components) on the same architecture, seeding protocol, and canonical
numpy arithmetic. A tape-based training run with every frequency component
disabled must reproduce this module's loss sequence bit for bit; any
disagreement means one of the two implementations is wrong.

Architecture mirrored here (keep in sync with the model definitions):

* generator: 4x4 transposed-conv stem from a 64-dim latent, then four
  (nearest-upsample, 3x3 conv, batch norm, leaky 0.2) blocks with channels
  64/48/32/16/8, then a 3x3 conv + tanh to 3x64x64,
* discriminator: four (3x3 stride-2 conv, batch norm, leaky 0.2) blocks
  with channels 16/32/48/64, a 4x4 valid conv to a per-sample score, and a
  decoder (upsample, conv 48->24, BN, leaky, upsample, conv 24->3, tanh)
  reconstructing a 32x32 image from the 8x8 features,
* Adam with bias correction, epsilon added outside the square root.

Per-step randomness: step t consumes np.random.default_rng([seed, 2, t]),
drawing the discriminator-update latents first, then the generator-update
latents. Real batches come from shuffled epochs of
np.random.default_rng([seed, 1]) permutations.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LATENT_DIM = 64
LEAKY_SLOPE = 0.2
BN_EPS = 1e-5


# ---------------------------------------------------------------------------
# primitive layers (forward and hand-derived backward)
# ---------------------------------------------------------------------------


def _patches(x, kh, kw, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    v = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.ascontiguousarray(v.transpose(0, 2, 3, 1, 4, 5))


def _scatter(cols, hw, stride, pad):
    n, oh, ow, c, kh, kw = cols.shape
    h, w = hw
    buf = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            patch = np.ascontiguousarray(cols[:, :, :, :, i, j].transpose(0, 3, 1, 2))
            buf[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += patch
    if pad:
        buf = np.ascontiguousarray(buf[:, :, pad : pad + h, pad : pad + w])
    return buf


def conv_fwd(x, w, b=None, stride=1, pad=0):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    cols = _patches(x, kh, kw, stride, pad)
    oh, ow = cols.shape[1], cols.shape[2]
    cols2 = cols.reshape(n * oh * ow, ci * kh * kw)
    y2 = cols2 @ w.reshape(co, -1).T
    y = np.ascontiguousarray(y2.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))
    if b is not None:
        y = y + b
    return y, cols2


def conv_bwd(g, cols2, w, x_shape, stride, pad, need_dx=True, need_dw=True):
    n, ci, h, wd = x_shape
    co, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, co)
    dx = dw = None
    if need_dx:
        dcols = g2 @ w.reshape(co, -1)
        dx = _scatter(dcols.reshape(n, oh, ow, ci, kh, kw), (h, wd), stride, pad)
    if need_dw:
        dw = (g2.T @ cols2).reshape(w.shape)
    return dx, dw


def conv_bias_grad(g):
    co = g.shape[1]
    return g.sum(axis=(0, 2, 3)).reshape(1, co, 1, 1)


def convT_fwd(z, w):
    """Stride-1 transposed conv of a 1x1 input: a linear map to kh x kw."""
    n = z.shape[0]
    co, cig, kh, kw = w.shape
    z2 = np.ascontiguousarray(z.transpose(0, 2, 3, 1)).reshape(n, co)
    cols = z2 @ w.reshape(co, -1)
    return np.ascontiguousarray(cols.reshape(n, cig, kh, kw)), z2


def convT_bwd_weight(z2, g):
    n = g.shape[0]
    return (z2.T @ g.reshape(n, -1)).reshape(z2.shape[1], g.shape[1], g.shape[2], g.shape[3])


def bn_fwd(x, gamma, beta):
    mu = x.mean(axis=(0, 2, 3), keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=(0, 2, 3), keepdims=True)
    inv = np.float32(1.0) / np.sqrt(var + np.float32(BN_EPS))
    xhat = xc * inv
    y = gamma * xhat + beta
    return y, (xhat, inv)


def bn_bwd(g, gamma, cache, need_dx=True, need_dparams=True):
    xhat, inv = cache
    m = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    dgamma = dbeta = dx = None
    if need_dparams:
        dbeta = g.sum(axis=(0, 2, 3), keepdims=True)
        dgamma = (g * xhat).sum(axis=(0, 2, 3), keepdims=True)
    if need_dx:
        dxhat = g * gamma
        s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        dx = (inv / np.float32(m)) * (np.float32(m) * dxhat - s1 - xhat * s2)
    return dx, dgamma, dbeta


def leaky_fwd(x):
    return np.where(x >= 0, x, np.float32(LEAKY_SLOPE) * x)


def leaky_bwd(g, x):
    return g * np.where(x >= 0, np.float32(1.0), np.float32(LEAKY_SLOPE))


def upsample_fwd(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample_bwd(g):
    n, c, h2, w2 = g.shape
    return g.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))


def box_down(x, target):
    n, c, h, w = x.shape
    f = h // target
    return x.reshape(n, c, target, f, target, f).mean(axis=(3, 5))


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------

_G_BLOCKS = (8, 16, 32, 64)
_D_BLOCKS = (32, 16, 8, 4)


def generator_forward(p, z):
    """Forward pass; returns the image and every intermediate the backward needs."""
    cache = {}
    x, cache["stem_z2"] = convT_fwd(z, p["stem_w"])
    for s in _G_BLOCKS:
        cache[f"up{s}_in"] = x
        x = upsample_fwd(x)
        x, cache[f"up{s}_cols"] = conv_fwd(x, p[f"up{s}_w"], stride=1, pad=1)
        cache[f"up{s}_conv"] = x
        x, cache[f"up{s}_bn"] = bn_fwd(x, p[f"up{s}_gamma"], p[f"up{s}_beta"])
        cache[f"up{s}_pre"] = x
        x = leaky_fwd(x)
    cache["body"] = x
    y, cache["out_cols"] = conv_fwd(x, p["out_w"], p["out_b"], stride=1, pad=1)
    cache["out_pre"] = y
    img = np.tanh(y)
    cache["img"] = img
    return img, cache


def generator_backward(p, cache, d_img):
    """Parameter gradients of the generator given d(loss)/d(image)."""
    grads = {}
    g = d_img * (np.float32(1.0) - cache["img"] * cache["img"])
    body = cache["body"]
    n, c, h, w = body.shape
    dx, grads["out_w"] = conv_bwd(g, cache["out_cols"], p["out_w"], body.shape, 1, 1)
    grads["out_b"] = conv_bias_grad(g)
    g = dx
    for s in reversed(_G_BLOCKS):
        g = leaky_bwd(g, cache[f"up{s}_pre"])
        g, grads[f"up{s}_gamma"], grads[f"up{s}_beta"] = bn_bwd(
            g, p[f"up{s}_gamma"], cache[f"up{s}_bn"]
        )
        x_in = cache[f"up{s}_in"]
        up_shape = (x_in.shape[0], x_in.shape[1], x_in.shape[2] * 2, x_in.shape[3] * 2)
        g, grads[f"up{s}_w"] = conv_bwd(
            g, cache[f"up{s}_cols"], p[f"up{s}_w"], up_shape, 1, 1
        )
        g = upsample_bwd(g)
    grads["stem_w"] = convT_bwd_weight(cache["stem_z2"], g)
    return grads


# ---------------------------------------------------------------------------
# discriminator
# ---------------------------------------------------------------------------


def discriminator_forward(p, x, need_decoder):
    cache = {"input_shape": x.shape}
    for s in _D_BLOCKS:
        cache[f"down{s}_in_shape"] = x.shape
        x, cache[f"down{s}_cols"] = conv_fwd(x, p[f"down{s}_w"], stride=2, pad=1)
        x, cache[f"down{s}_bn"] = bn_fwd(x, p[f"down{s}_gamma"], p[f"down{s}_beta"])
        cache[f"down{s}_pre"] = x
        x = leaky_fwd(x)
        cache[f"down{s}_out"] = x
    score, cache["score_cols"] = conv_fwd(x, p["score_w"], p["score_b"], stride=1, pad=0)

    recon = None
    if need_decoder:
        d = upsample_fwd(cache["down8_out"])
        cache["dec1_in_shape"] = d.shape
        d, cache["dec1_cols"] = conv_fwd(d, p["dec1_w"], stride=1, pad=1)
        d, cache["dec1_bn"] = bn_fwd(d, p["dec1_gamma"], p["dec1_beta"])
        cache["dec1_pre"] = d
        d = leaky_fwd(d)
        d = upsample_fwd(d)
        cache["dec2_in_shape"] = d.shape
        d, cache["dec2_cols"] = conv_fwd(d, p["dec2_w"], p["dec2_b"], stride=1, pad=1)
        cache["dec2_pre"] = d
        recon = np.tanh(d)
        cache["recon"] = recon
    return score, cache, recon


def _accumulate(grads, name, value):
    if name in grads:
        grads[name] = grads[name] + value
    else:
        grads[name] = value


def discriminator_backward_params(p, cache, d_score, d_recon, grads):
    """Accumulate parameter gradients for one discriminator pass."""
    d_tap8_extra = None
    if d_recon is not None:
        g = d_recon * (np.float32(1.0) - cache["recon"] * cache["recon"])
        dx, dw = conv_bwd(g, cache["dec2_cols"], p["dec2_w"], cache["dec2_in_shape"], 1, 1)
        _accumulate(grads, "dec2_w", dw)
        _accumulate(grads, "dec2_b", conv_bias_grad(g))
        g = upsample_bwd(dx)
        g = leaky_bwd(g, cache["dec1_pre"])
        g, dgamma, dbeta = bn_bwd(g, p["dec1_gamma"], cache["dec1_bn"])
        _accumulate(grads, "dec1_gamma", dgamma)
        _accumulate(grads, "dec1_beta", dbeta)
        dx, dw = conv_bwd(g, cache["dec1_cols"], p["dec1_w"], cache["dec1_in_shape"], 1, 1)
        _accumulate(grads, "dec1_w", dw)
        d_tap8_extra = upsample_bwd(dx)

    x4 = cache["down4_out"]
    dx, dw = conv_bwd(d_score, cache["score_cols"], p["score_w"], x4.shape, 1, 0)
    _accumulate(grads, "score_w", dw)
    _accumulate(grads, "score_b", conv_bias_grad(d_score))
    g = dx
    for s in _D_BLOCKS[::-1]:
        if s == 8 and d_tap8_extra is not None:
            g = g + d_tap8_extra
        g = leaky_bwd(g, cache[f"down{s}_pre"])
        g, dgamma, dbeta = bn_bwd(g, p[f"down{s}_gamma"], cache[f"down{s}_bn"])
        _accumulate(grads, f"down{s}_gamma", dgamma)
        _accumulate(grads, f"down{s}_beta", dbeta)
        need_dx = s != 32
        dx, dw = conv_bwd(
            g, cache[f"down{s}_cols"], p[f"down{s}_w"],
            cache[f"down{s}_in_shape"], 2, 1, need_dx=need_dx,
        )
        _accumulate(grads, f"down{s}_w", dw)
        g = dx


def discriminator_backward_input(p, cache, d_score):
    """d(loss)/d(input image) with frozen discriminator parameters."""
    x4 = cache["down4_out"]
    g, _ = conv_bwd(d_score, cache["score_cols"], p["score_w"], x4.shape, 1, 0, need_dw=False)
    for s in _D_BLOCKS[::-1]:
        g = leaky_bwd(g, cache[f"down{s}_pre"])
        g, _, _ = bn_bwd(g, p[f"down{s}_gamma"], cache[f"down{s}_bn"], need_dparams=False)
        g, _ = conv_bwd(
            g, cache[f"down{s}_cols"], p[f"down{s}_w"],
            cache[f"down{s}_in_shape"], 2, 1, need_dw=False,
        )
    return g


# ---------------------------------------------------------------------------
# optimizer, batching, training loop
# ---------------------------------------------------------------------------


class AdamRef:
    def __init__(self, names, params, lr, beta1, beta2, eps=1e-8):
        self.names = list(names)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(params[k]) for k in self.names}
        self.v = {k: np.zeros_like(params[k]) for k in self.names}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k in self.names:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[k] / c1
            vhat = self.v[k] / c2
            params[k] = params[k] - self.lr * (mhat / (np.sqrt(vhat) + self.eps))


def epoch_batches(n_images, batch, seed):
    """Indices of shuffled-epoch batches; one buffer carries remainders over."""
    rng = np.random.default_rng([seed, 1])
    buf: list[int] = []
    while True:
        if len(buf) < batch:
            buf.extend(rng.permutation(n_images).tolist())
        idx, buf = buf[:batch], buf[batch:]
        yield idx


def train_reference(g_params, d_params, images, batch, steps, seed,
                    lr=2e-4, beta1=0.5, beta2=0.999, start_step=0):
    """Run the plain hinge-GAN for ``steps`` steps; returns per-step losses.

    ``g_params`` / ``d_params`` are dicts of float32 arrays (mutated in
    place). Returns a list of (l_d, l_g, l_recons) float triples, one per
    step, in the exact float32 values produced.
    """
    g_params = {k: v for k, v in g_params.items()}
    d_params = {k: v for k, v in d_params.items()}
    opt_g = AdamRef(g_params.keys(), g_params, lr, beta1, beta2)
    opt_d = AdamRef(d_params.keys(), d_params, lr, beta1, beta2)
    opt_g.t = start_step
    opt_d.t = start_step
    batcher = epoch_batches(images.shape[0], batch, seed)
    for _ in range(start_step):
        next(batcher)

    history = []
    for t in range(start_step + 1, start_step + steps + 1):
        real = images[next(batcher)]
        step_rng = np.random.default_rng([seed, 2, t])
        z_d = step_rng.standard_normal((batch, LATENT_DIM, 1, 1), dtype=np.float32)
        z_g = step_rng.standard_normal((batch, LATENT_DIM, 1, 1), dtype=np.float32)

        # discriminator update
        fake, _ = generator_forward(g_params, z_d)
        score_r, cache_r, recon = discriminator_forward(d_params, real, need_decoder=True)
        score_f, cache_f, _ = discriminator_forward(d_params, fake, need_decoder=True)
        nb = np.float32(score_r.size)
        margin_r = np.float32(1.0) - score_r
        margin_f = np.float32(1.0) + score_f
        l_d = np.float32(np.mean(np.maximum(margin_r, np.float32(0.0)))
                         + np.mean(np.maximum(margin_f, np.float32(0.0))))
        target = box_down(real, recon.shape[2])
        rec_diff = recon - target
        l_recons = np.float32(np.mean(np.abs(rec_diff)))

        d_score_r = -((margin_r >= 0) * (np.float32(1.0) / nb)).astype(np.float32)
        d_score_f = ((margin_f >= 0) * (np.float32(1.0) / nb)).astype(np.float32)
        d_recon = np.sign(rec_diff) * (np.float32(1.0) / np.float32(rec_diff.size))
        d_grads: dict[str, np.ndarray] = {}
        discriminator_backward_params(d_params, cache_r, d_score_r, d_recon, d_grads)
        discriminator_backward_params(d_params, cache_f, d_score_f, None, d_grads)
        opt_d.step(d_params, d_grads)

        # generator update
        fake2, g_cache = generator_forward(g_params, z_g)
        score_g, cache_g, _ = discriminator_forward(d_params, fake2, need_decoder=False)
        l_g = np.float32(-np.mean(score_g))
        d_score = np.full(score_g.shape, np.float32(1.0) / np.float32(score_g.size),
                          dtype=np.float32) * np.float32(-1.0)
        d_fake = discriminator_backward_input(d_params, cache_g, d_score)
        g_grads = generator_backward(g_params, g_cache, d_fake)
        opt_g.step(g_params, g_grads)

        history.append((float(l_d), float(l_g), float(l_recons)))
    return history, g_params, d_params
