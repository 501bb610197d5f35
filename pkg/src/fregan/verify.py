"""Release-gate invariant suites behind the ``verify`` subcommand.

Each suite re-checks one anchor property of the build on fresh random
inputs: wavelet perfect reconstruction, Parseval energy preservation,
convolution adjointness, analytic-vs-numeric gradients, and bit-exact
equivalence of the disabled-components trainer with the hand-written
plain-GAN reference. ``perturb_eps`` biases the Haar kernels through a
fault-injection hook so the gate itself can be tested: any nonzero value
must make the wavelet suites fail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import data, engine, losses, models, training, wavelet
from . import reference_gan as ref
from .data import DatasetSpec
from .engine import Tensor


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _random_shapes(rng, count):
    for _ in range(count):
        n = int(rng.integers(1, 4))
        c = int(rng.integers(1, 5))
        h = 2 * int(rng.integers(1, 17))
        w = 2 * int(rng.integers(1, 17))
        yield (n, c, h, w)


def suite_reconstruction(rng: np.random.Generator) -> SuiteResult:
    worst = 0.0
    for shape in _random_shapes(rng, 25):
        x = rng.standard_normal(shape).astype(np.float32)
        rec = wavelet.wave_unpool(wavelet.wave_pool(Tensor(x)))
        worst = max(worst, float(np.max(np.abs(rec.data - x))))
    return SuiteResult("reconstruction", worst < 1e-5, f"max|unpool(pool(x))-x|={worst:.2e}")


def suite_parseval(rng: np.random.Generator) -> SuiteResult:
    worst = 0.0
    for shape in _random_shapes(rng, 25):
        x = rng.standard_normal(shape).astype(np.float32)
        bands = wavelet.wave_pool(Tensor(x))
        e_in = float(np.sum(x.astype(np.float64) ** 2))
        e_bands = sum(float(np.sum(t.data.astype(np.float64) ** 2)) for t in bands)
        worst = max(worst, abs(e_in - e_bands) / e_in)
    return SuiteResult("parseval", worst < 1e-4, f"max relative energy gap={worst:.2e}")


def suite_adjoint(rng: np.random.Generator) -> SuiteResult:
    worst = 0.0
    for _ in range(25):
        stride = int(rng.integers(1, 3))
        groups = int(rng.choice([1, 2]))
        ci, co, k = 4, 6, 3
        oh = int(rng.integers(2, 6))
        h = (oh - 1) * stride + k
        x = Tensor(rng.standard_normal((2, ci, h, h)).astype(np.float32))
        w = Tensor(rng.standard_normal((co, ci // groups, k, k)).astype(np.float32))
        fx = engine.conv2d(x, w, stride=stride, groups=groups)
        y = Tensor(rng.standard_normal(fx.shape).astype(np.float32))
        lhs = float(np.sum(fx.data.astype(np.float64) * y.data))
        bx = engine.conv2d_transpose(y, w, stride=stride, groups=groups)
        rhs = float(np.sum(x.data.astype(np.float64) * bx.data))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-3))
    return SuiteResult("adjoint", worst < 1e-4, f"max relative adjoint gap={worst:.2e}")


def suite_gradcheck(rng: np.random.Generator) -> SuiteResult:
    checks: list[tuple[str, Callable, list[Tensor]]] = []
    x = Tensor(rng.standard_normal((2, 2, 4, 4)).astype(np.float32))
    w = Tensor((0.3 * rng.standard_normal((3, 2, 3, 3))).astype(np.float32))
    gamma = Tensor(np.ones((1, 3, 1, 1), np.float32))
    beta = Tensor(np.zeros((1, 3, 1, 1), np.float32))

    def composite(xx, ww, gg, bb):
        h = engine.conv2d(xx, ww, padding=1)
        h = engine.batch_norm2d(h, gg, bb)
        h = engine.leaky_relu(h, 0.2)
        return engine.mean_all(engine.tanh(h))

    checks.append(("conv-bn-leaky", composite, [x, w, gamma, beta]))

    wt = Tensor((0.3 * rng.standard_normal((2, 3, 2, 2))).astype(np.float32))
    xt = Tensor(rng.standard_normal((1, 2, 3, 3)).astype(np.float32))
    checks.append((
        "conv-transpose",
        lambda a, b: engine.mean_all(engine.tanh(engine.conv2d_transpose(a, b, stride=2))),
        [xt, wt],
    ))

    up = Tensor(rng.standard_normal((1, 2, 3, 3)).astype(np.float32))
    checks.append((
        "upsample", lambda t: engine.mean_all(engine.tanh(engine.upsample_nearest2(t))), [up]
    ))

    real = Tensor(rng.uniform(-0.7, 0.7, (4, 1, 1, 1)).astype(np.float32))
    fake = Tensor(rng.uniform(-0.7, 0.7, (4, 1, 1, 1)).astype(np.float32))
    checks.append(("hinge", losses.hinge_d_loss, [real, fake]))

    fx = Tensor(rng.standard_normal((1, 2, 4, 4)).astype(np.float32))
    checks.append(("fsc", lambda t: engine.mean_all(losses.fsc_apply(t)), [fx]))

    worst, worst_name = 0.0, ""
    for name, f, inputs in checks:
        err = engine.gradcheck(f, inputs).max_error
        if err > worst:
            worst, worst_name = err, name
    return SuiteResult("gradcheck", worst < 1e-3, f"max error={worst:.2e} ({worst_name})")


def suite_baseline_equivalence(rng: np.random.Generator) -> SuiteResult:
    steps = 12
    spec = DatasetSpec("sinusoid-mix", n=8, size=64, seed=21)
    images = data.synth_dataset(spec)
    config = training.TrainConfig(
        dataset=spec, iterations=steps, seed=17, batch_size=4,
        use_hfd=False, use_hfa=False, use_fsc=False, out_dir="unused",
    )
    gen, disc, heads = models.build_models(config.seed)
    g0 = {k: v.data.copy() for k, v in gen.params.items()}
    d0 = {k: v.data.copy() for k, v in disc.params.items()}
    opt_g = training.Adam(training._named_g_params(gen), config.lr, config.beta1, config.beta2)
    opt_d = training.Adam(training._named_d_params(disc, heads), config.lr, config.beta1, config.beta2)
    batcher = data.batches(images, config.batch_size, config.seed)
    mine = []
    for t in range(1, steps + 1):
        r = training.train_step(next(batcher), gen, disc, heads, opt_g, opt_d, config, t)
        mine.append((r.l_d, r.l_g, r.l_recons))
    theirs, _, _ = ref.train_reference(
        g0, d0, images, config.batch_size, steps, config.seed,
        lr=config.lr, beta1=config.beta1, beta2=config.beta2,
    )
    same = mine == theirs
    detail = "loss sequences bit-identical" if same else (
        f"first mismatch at step {next(i for i, (a, b) in enumerate(zip(mine, theirs)) if a != b) + 1}"
    )
    return SuiteResult("baseline-equivalence", same, detail)


SUITES = (
    suite_reconstruction,
    suite_parseval,
    suite_adjoint,
    suite_gradcheck,
    suite_baseline_equivalence,
)


def run_all(seed: int = 0, perturb_eps: float = 0.0) -> list[SuiteResult]:
    """Run every suite, optionally with fault-injected wavelet kernels."""
    results = []
    for index, suite in enumerate(SUITES):
        rng = np.random.default_rng([seed, index])
        if perturb_eps:
            with wavelet.kernel_perturbation(perturb_eps):
                results.append(suite(rng))
        else:
            results.append(suite(rng))
    return results
