"""Alternating GAN training: Adam, the two-phase step, loop, checkpoints.

Seeding contract (shared verbatim with the plain-GAN reference):

* parameters come from np.random.default_rng([seed, 0]) in model build order,
* real-batch shuffling consumes np.random.default_rng([seed, 1]),
* step t draws from np.random.default_rng([seed, 2, t]): first the latents
  for the discriminator update, then the latents for the generator update.

Because per-step randomness depends only on (seed, t), resuming from a
checkpoint at step t reproduces an uninterrupted run bit for bit; no RNG
state needs to be serialized.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import data, engine, losses, models
from .checkpoint import CheckpointError, read_entries, write_entries
from .data import DatasetSpec
from .engine import Tensor
from .losses import HfdHead, LossReport
from .models import DiscriminatorNet, GeneratorNet, set_requires_grad

LOG_HEADER = "iteration,l_d,l_g,l_d_hf,l_g_hf,l_align,l_recons"


class DivergenceError(RuntimeError):
    """A loss term became NaN/Inf during training."""


@dataclass
class TrainConfig:
    dataset: DatasetSpec
    iterations: int
    seed: int = 0
    batch_size: int = 4
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    use_hfd: bool = True
    use_hfa: bool = True
    use_fsc: bool = True
    g_hf_sign: float = losses.HFD_G_LOSS_SIGN
    log_interval: int = 1
    checkpoint_interval: Optional[int] = None
    out_dir: str = "runs/run"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError(f"batch size must be >= 2, got {self.batch_size}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size > self.dataset.n:
            raise ValueError(
                f"batch size {self.batch_size} exceeds dataset size {self.dataset.n}"
            )

    @property
    def checkpoint_path(self) -> str:
        return os.path.join(self.out_dir, "checkpoint.bin")

    @property
    def log_path(self) -> str:
        return os.path.join(self.out_dir, "losses.csv")


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment buffers and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, Optional[np.ndarray]],
    state: AdamState,
    lr: float = 2e-4,
    beta1: float = 0.5,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place. Missing grads count as zero."""
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise engine.ShapeError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name!r} shape {p.data.shape}"
            )
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        mhat = state.m[name] / c1
        vhat = state.v[name] / c2
        p.data = p.data - lr * (mhat / (np.sqrt(vhat) + eps))


class Adam:
    """Adam bound to one named parameter set, reading ``.grad`` buffers."""

    def __init__(self, params: dict[str, Tensor], lr: float, beta1: float, beta2: float):
        self.params = params
        self.lr, self.beta1, self.beta2 = lr, beta1, beta2
        self.state = AdamState.for_params(params)

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.params.items()}
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# the training step
# ---------------------------------------------------------------------------


def _named_d_params(disc: DiscriminatorNet, heads: dict[int, HfdHead]) -> dict[str, Tensor]:
    named = {f"d/{k}": v for k, v in disc.params.items()}
    for scale in sorted(heads):
        named.update({f"hfd/{scale}/{k}": v for k, v in heads[scale].params.items()})
    return named


def _named_g_params(gen: GeneratorNet) -> dict[str, Tensor]:
    return {f"g/{k}": v for k, v in gen.params.items()}


def _sum_terms(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = engine.add(total, t)
    return total


def train_step(
    real_batch: np.ndarray,
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    heads: dict[int, HfdHead],
    opt_g: Adam,
    opt_d: Adam,
    config: TrainConfig,
    step_index: int,
) -> LossReport:
    """One discriminator update followed by one generator update.

    The discriminator's real-image taps are reused (as constants) for the
    alignment loss in the generator phase, avoiding a third forward pass.
    """
    n = real_batch.shape[0]
    step_rng = np.random.default_rng([config.seed, 2, step_index])
    z_d = step_rng.standard_normal((n, models.LATENT_DIM, 1, 1), dtype=np.float32)
    z_g = step_rng.standard_normal((n, models.LATENT_DIM, 1, 1), dtype=np.float32)

    g_params = _named_g_params(gen)
    d_params = _named_d_params(disc, heads)

    # --- discriminator update (generator frozen: its pass builds no graph)
    set_requires_grad(g_params.values(), False)
    set_requires_grad(d_params.values(), True)
    fake_img, _ = gen.forward(Tensor(z_d), fsc_enabled=config.use_fsc)
    real = Tensor(real_batch)
    score_r, taps_r, recon = disc.forward(real)
    score_f, taps_f, _ = disc.forward(fake_img)

    l_d_t = losses.hinge_d_loss(score_r, score_f)
    l_rec_t = losses.recon_loss(recon, real)
    d_terms = [l_d_t, l_rec_t]
    d_hf_by_scale: dict[int, float] = {}
    l_d_hf_val = 0.0
    if config.use_hfd:
        real_scores = losses.hfd_scores(taps_r, heads)
        fake_scores = losses.hfd_scores(taps_f, heads)
        hf_terms = []
        for scale in sorted(real_scores):
            term = losses.hinge_d_loss(real_scores[scale], fake_scores[scale])
            d_hf_by_scale[scale] = term.item()
            hf_terms.append(term)
        l_d_hf_t = _sum_terms(hf_terms)
        l_d_hf_val = l_d_hf_t.item()
        d_terms.append(l_d_hf_t)
    opt_d.zero_grad()
    engine.backward(_sum_terms(d_terms))
    opt_d.step()
    real_taps_const = taps_r.detach()

    # --- generator update (discriminator and heads frozen)
    set_requires_grad(d_params.values(), False)
    set_requires_grad(g_params.values(), True)
    fake2, g_taps = gen.forward(Tensor(z_g), fsc_enabled=config.use_fsc)
    score_g, taps_g_d, _ = disc.forward(fake2)

    l_g_t = losses.hinge_g_loss(score_g)
    g_terms = [l_g_t]
    l_g_hf_val = 0.0
    if config.use_hfd:
        scores = losses.hfd_scores(taps_g_d, heads)
        hf_terms = [
            engine.scale(engine.mean_all(scores[s]), config.g_hf_sign)
            for s in sorted(scores)
        ]
        l_g_hf_t = _sum_terms(hf_terms)
        l_g_hf_val = l_g_hf_t.item()
        g_terms.append(l_g_hf_t)
    align_by_scale: dict[int, float] = {}
    l_align_val = 0.0
    if config.use_hfa:
        per_scale = losses.hfa_per_scale(real_taps_const, g_taps)
        align_by_scale = {s: t.item() for s, t in per_scale.items()}
        l_align_t = _sum_terms(list(per_scale.values()))
        l_align_val = l_align_t.item()
        g_terms.append(l_align_t)
    opt_g.zero_grad()
    engine.backward(_sum_terms(g_terms))
    opt_g.step()
    set_requires_grad(d_params.values(), True)

    report = LossReport(
        l_d=l_d_t.item(),
        l_g=l_g_t.item(),
        l_d_hf=l_d_hf_val,
        l_g_hf=l_g_hf_val,
        l_align=l_align_val,
        l_recons=l_rec_t.item(),
        l_d_hf_by_scale=d_hf_by_scale,
        l_align_by_scale=align_by_scale,
    )
    losses.total_losses(report, config.use_hfd, config.use_hfa, config.use_fsc)
    return report


# ---------------------------------------------------------------------------
# checkpoint assembly
# ---------------------------------------------------------------------------

_CONFIG_FIELDS = (
    "seed", "batch_size", "iterations", "lr", "beta1", "beta2",
    "use_hfd", "use_hfa", "use_fsc", "g_hf_sign", "log_interval",
)
_RESUME_MATCH_FIELDS = (
    "seed", "batch_size", "lr", "beta1", "beta2",
    "use_hfd", "use_hfa", "use_fsc", "g_hf_sign",
)


def _config_entries(config: TrainConfig) -> dict[str, np.ndarray]:
    out = {}
    for name in _CONFIG_FIELDS:
        out[f"config/{name}"] = np.asarray(float(getattr(config, name)), np.float32)
    ds = config.dataset
    out["config/dataset_kind"] = np.asarray(float(data.KIND_IDS[ds.kind]), np.float32)
    out["config/dataset_n"] = np.asarray(float(ds.n), np.float32)
    out["config/dataset_size"] = np.asarray(float(ds.size), np.float32)
    out["config/dataset_seed"] = np.asarray(float(ds.seed), np.float32)
    return out


def save_checkpoint(
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    heads: dict[int, HfdHead],
    opt_g: Adam,
    opt_d: Adam,
    config: TrainConfig,
    step: int,
    path: str,
) -> None:
    entries: dict[str, np.ndarray] = {}
    named = {}
    named.update(_named_g_params(gen))
    named.update(_named_d_params(disc, heads))
    for name, p in named.items():
        entries[name] = p.data
    for tag, opt in (("opt_g", opt_g), ("opt_d", opt_d)):
        for name, arr in opt.state.m.items():
            entries[f"{tag}/m/{name}"] = arr
        for name, arr in opt.state.v.items():
            entries[f"{tag}/v/{name}"] = arr
        entries[f"{tag}/t"] = np.asarray(float(opt.state.t), np.float32)
    entries["train/step"] = np.asarray(float(step), np.float32)
    entries.update(_config_entries(config))
    write_entries(entries, path)


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    """Raw entry map; see :func:`restore_state` for applying it."""
    return read_entries(path)


def restore_state(
    entries: dict[str, np.ndarray],
    gen: GeneratorNet,
    disc: DiscriminatorNet,
    heads: dict[int, HfdHead],
    opt_g: Adam,
    opt_d: Adam,
    config: Optional[TrainConfig] = None,
) -> int:
    """Load arrays into models/optimizers; returns the completed step count."""
    named = {}
    named.update(_named_g_params(gen))
    named.update(_named_d_params(disc, heads))
    for name, p in named.items():
        if name not in entries:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        if tuple(entries[name].shape) != p.data.shape:
            raise CheckpointError(
                f"checkpoint parameter {name!r} has shape {entries[name].shape}, "
                f"expected {p.data.shape}"
            )
        p.data = np.ascontiguousarray(entries[name])
    for tag, opt in (("opt_g", opt_g), ("opt_d", opt_d)):
        for name in opt.state.m:
            opt.state.m[name] = np.ascontiguousarray(entries[f"{tag}/m/{name}"])
            opt.state.v[name] = np.ascontiguousarray(entries[f"{tag}/v/{name}"])
        opt.state.t = int(entries[f"{tag}/t"].item())
    if config is not None:
        for name in _RESUME_MATCH_FIELDS:
            stored = float(entries[f"config/{name}"].item())
            current = float(np.float32(float(getattr(config, name))))
            if stored != current:
                raise CheckpointError(
                    f"checkpoint config {name}={stored} does not match "
                    f"requested {name}={current}"
                )
    return int(entries["train/step"].item())


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    config: TrainConfig
    reports: list[LossReport]
    checkpoint_path: str
    log_path: str
    gen: GeneratorNet = field(repr=False, default=None)
    disc: DiscriminatorNet = field(repr=False, default=None)


def _format_row(step: int, r: LossReport) -> str:
    vals = ",".join(repr(float(v)) for v in r.values())
    return f"{step},{vals}"


def train_loop(
    config: TrainConfig,
    images: Optional[np.ndarray] = None,
    resume: Optional[str] = None,
) -> TrainResult:
    """Run the configured number of steps; write the CSV log and checkpoints."""
    if images is None:
        images = data.synth_dataset(config.dataset)
    gen, disc, heads = models.build_models(config.seed)
    opt_g = Adam(_named_g_params(gen), config.lr, config.beta1, config.beta2)
    opt_d = Adam(_named_d_params(disc, heads), config.lr, config.beta1, config.beta2)

    start_step = 0
    if resume is not None:
        start_step = restore_state(
            read_entries(resume), gen, disc, heads, opt_g, opt_d, config
        )

    os.makedirs(config.out_dir, exist_ok=True)
    batcher = data.batches(images, config.batch_size, config.seed)
    for _ in range(start_step):
        next(batcher)

    reports: list[LossReport] = []
    appending = (
        start_step > 0
        and os.path.exists(config.log_path)
        and os.path.getsize(config.log_path) > 0
    )
    interval = config.checkpoint_interval or config.iterations
    with open(config.log_path, "a" if appending else "w") as log:
        if not appending:
            log.write(LOG_HEADER + "\n")
        for step in range(start_step + 1, config.iterations + 1):
            batch = next(batcher)
            try:
                report = train_step(batch, gen, disc, heads, opt_g, opt_d, config, step)
            except FloatingPointError as exc:
                raise DivergenceError(f"iteration {step}: {exc}") from exc
            reports.append(report)
            if step % config.log_interval == 0 or step == config.iterations:
                log.write(_format_row(step, report) + "\n")
                log.flush()
            if step % interval == 0 or step == config.iterations:
                save_checkpoint(
                    gen, disc, heads, opt_g, opt_d, config, step, config.checkpoint_path
                )
    return TrainResult(config, reports, config.checkpoint_path, config.log_path, gen, disc)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample(checkpoint_path: str, n: int, seed: int, outdir: str) -> list[str]:
    """Generate ``n`` PNGs from a checkpointed generator, deterministically.

    Latents come from np.random.default_rng(seed); images are produced in
    chunks of up to 8 (batch norm uses the chunk's statistics).
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    entries = read_entries(checkpoint_path)
    gen, disc, heads = models.build_models(0)
    for name, p in _named_g_params(gen).items():
        if name not in entries:
            raise CheckpointError(f"checkpoint is missing parameter {name!r}")
        p.data = np.ascontiguousarray(entries[name])
    use_fsc = bool(entries.get("config/use_fsc", np.ones(1, np.float32)).item())
    set_requires_grad(gen.parameters(), False)

    os.makedirs(outdir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    produced = 0
    while produced < n:
        chunk = min(8, n - produced)
        z = rng.standard_normal((chunk, models.LATENT_DIM, 1, 1), dtype=np.float32)
        images, _ = gen.forward(Tensor(z), fsc_enabled=use_fsc)
        for i in range(chunk):
            path = os.path.join(outdir, f"sample_{produced + i:05d}.png")
            data.save_png(images.data[i], path)
            paths.append(path)
        produced += chunk
    return paths
