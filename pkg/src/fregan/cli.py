"""Command-line interface: train, sample, decompose, spectrum, compare, verify.

One executable, subcommand style. Results go to stdout as a key=value
block (or CSV written to files); the fully resolved configuration of every
run is echoed to stderr for reproducibility. A TOML config file can supply
any flag's value; explicit flags win.

Exit codes: 0 success, 1 user error (bad flags, unreadable input),
2 internal invariant failure (verification failures, divergence).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
from PIL import Image

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import data, spectral, training, verify, wavelet
from .checkpoint import CheckpointError
from .data import DatasetSpec
from .engine import ShapeError, Tensor
from .training import DivergenceError, TrainConfig

EXIT_OK = 0
EXIT_USER = 1
EXIT_INVARIANT = 2


class UserError(Exception):
    """Invalid input or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UserError(message)


def _echo_config(pairs: dict) -> None:
    for key, value in pairs.items():
        print(f"[config] {key}={value}", file=sys.stderr)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise UserError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UserError(f"invalid TOML in {path}: {exc}") from exc


def _merge(args: argparse.Namespace, file_cfg: dict, key: str, default):
    """Explicit flag > config-file value > default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg_file = _load_config_file(args.config)
    kind = _merge(args, cfg_file, "dataset", "sinusoid-mix")
    data_dir = _merge(args, cfg_file, "data-dir", None)
    if data_dir is not None:
        kind = "directory"
    spec = DatasetSpec(
        kind=kind,
        n=int(_merge(args, cfg_file, "n", 16)),
        size=int(_merge(args, cfg_file, "size", 64)),
        seed=int(_merge(args, cfg_file, "seed", 0)),
        path=data_dir,
    )
    config = TrainConfig(
        dataset=spec,
        iterations=int(_merge(args, cfg_file, "iters", 100)),
        seed=int(_merge(args, cfg_file, "seed", 0)),
        batch_size=int(_merge(args, cfg_file, "batch", 4)),
        lr=float(_merge(args, cfg_file, "lr", 2e-4)),
        use_hfd=not _merge(args, cfg_file, "no-hfd", False),
        use_hfa=not _merge(args, cfg_file, "no-hfa", False),
        use_fsc=not _merge(args, cfg_file, "no-fsc", False),
        log_interval=int(_merge(args, cfg_file, "log-interval", 1)),
        checkpoint_interval=_merge(args, cfg_file, "checkpoint-interval", None),
        out_dir=str(_merge(args, cfg_file, "out", "runs/run")),
    )
    _echo_config({
        "dataset": spec.kind, "n": spec.n, "size": spec.size,
        "iterations": config.iterations, "batch": config.batch_size,
        "seed": config.seed, "lr": config.lr,
        "hfd": config.use_hfd, "hfa": config.use_hfa, "fsc": config.use_fsc,
        "out": config.out_dir, "resume": args.checkpoint or "",
    })
    result = training.train_loop(config, resume=args.checkpoint)
    last = result.reports[-1]
    print(f"iterations={config.iterations}")
    print(f"checkpoint={result.checkpoint_path}")
    print(f"log={result.log_path}")
    print(f"l_d={last.l_d!r}")
    print(f"l_g={last.l_g!r}")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg_file = _load_config_file(args.config)
    checkpoint = _merge(args, cfg_file, "checkpoint", None)
    if not checkpoint:
        raise UserError("sample needs --checkpoint")
    n = int(_merge(args, cfg_file, "n", 16))
    seed = int(_merge(args, cfg_file, "seed", 0))
    out = str(_merge(args, cfg_file, "out", "samples"))
    _echo_config({"checkpoint": checkpoint, "n": n, "seed": seed, "out": out})
    paths = training.sample(checkpoint, n, seed, out)
    print(f"written={len(paths)}")
    print(f"out={out}")
    return EXIT_OK


def _load_single_image(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    except OSError as exc:
        raise UserError(f"unreadable image {path}: {exc}") from exc
    return (arr / np.float32(127.5) - np.float32(1.0)).transpose(2, 0, 1)[None]


def _band_png(band: np.ndarray, path: str) -> None:
    # symmetric per-band normalization: zero maps to mid-gray
    peak = float(np.max(np.abs(band)))
    scaled = band / peak if peak > 0 else band
    u8 = np.clip(np.rint(127.5 + 127.5 * scaled), 0, 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0)).save(path, format="PNG")


def _band_csv(band: np.ndarray, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("channel,row,col,value\n")
        c, h, w = band.shape
        for ch in range(c):
            for i in range(h):
                row = band[ch, i]
                fh.writelines(f"{ch},{i},{j},{float(v)!r}\n" for j, v in enumerate(row))


def cmd_decompose(args) -> int:
    cfg_file = _load_config_file(args.config)
    levels = int(_merge(args, cfg_file, "levels", 1))
    out = str(_merge(args, cfg_file, "out", "decomposed"))
    _echo_config({"image": args.image, "levels": levels, "out": out})
    image = _load_single_image(args.image)
    os.makedirs(out, exist_ok=True)
    level_bands = wavelet.dwt_image(Tensor(image), levels)
    written = 0
    for level, bands in enumerate(level_bands, start=1):
        names = ("lh", "hl", "hh") if level < len(level_bands) else ("ll", "lh", "hl", "hh")
        for name in names:
            band = getattr(bands, name).data[0]
            base = os.path.join(out, f"level{level}_{name}")
            _band_png(band, base + ".png")
            _band_csv(band, base + ".csv")
            written += 1
    print(f"written={written}")
    print(f"out={out}")
    return EXIT_OK


def _corpus_profile(directory: str, size: int):
    images = data.load_image_dir(directory, size)
    spec2d = spectral.power_spectrum_2d(images)
    return images, spec2d, spectral.azimuthal_average(spec2d)


def cmd_spectrum(args) -> int:
    cfg_file = _load_config_file(args.config)
    size = int(_merge(args, cfg_file, "size", 64))
    out = str(_merge(args, cfg_file, "out", "spectrum"))
    _echo_config({"dir": args.dir, "size": size, "out": out})
    _, spec2d, profile = _corpus_profile(args.dir, size)
    os.makedirs(out, exist_ok=True)
    Image.fromarray(spectral.heatmap_u8(spec2d)).save(os.path.join(out, "spectrum2d.png"))
    with open(os.path.join(out, "spectrum2d.csv"), "w") as fh:
        fh.write(spectral.spectrum_to_csv(spec2d))
    with open(os.path.join(out, "profile.csv"), "w") as fh:
        fh.write(spectral.profile_to_csv(profile))
    with open(os.path.join(out, "slice0deg.csv"), "w") as fh:
        fh.write(spectral.slice_to_csv(spectral.spectrum_slice(spec2d)))
    print(f"images={spec2d.count}")
    print(f"out={out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg_file = _load_config_file(args.config)
    size = int(_merge(args, cfg_file, "size", 64))
    out = _merge(args, cfg_file, "out", None)
    _echo_config({"dir_a": args.dir_a, "dir_b": args.dir_b, "size": size, "out": out or ""})
    _, _, prof_a = _corpus_profile(args.dir_a, size)
    _, _, prof_b = _corpus_profile(args.dir_b, size)
    dist = spectral.spectrum_distance(prof_a, prof_b)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "per_bin_gap.csv"), "w") as fh:
            fh.write(spectral.gap_to_csv(dist))
    print(f"distance={dist.value!r}")
    print(f"high_half_gap={dist.high_half_gap!r}")
    return EXIT_OK


def cmd_verify(args) -> int:
    eps = float(args.perturb_kernels or 0.0)
    _echo_config({"perturb_kernels": eps})
    results = verify.run_all(seed=0, perturb_eps=eps)
    failed = [r for r in results if not r.passed]
    for r in results:
        print(f"{r.name}={'pass' if r.passed else 'fail'} ({r.detail})")
    if failed:
        print(f"failed={','.join(r.name for r in failed)}")
        return EXIT_INVARIANT
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="fregan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="TOML config file; explicit flags win")

    p = sub.add_parser("train", help="train a model and log per-step losses")
    p.add_argument("--dataset", choices=[k for k in data.KINDS if k != "directory"])
    p.add_argument("--data-dir", help="train on a directory of PNG/PPM images")
    p.add_argument("--n", type=int, help="synthetic corpus size")
    p.add_argument("--size", type=int, help="image resolution")
    p.add_argument("--iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--no-hfd", action="store_true", default=None,
                   help="disable the high-frequency discriminator heads")
    p.add_argument("--no-hfa", action="store_true", default=None,
                   help="disable high-frequency alignment")
    p.add_argument("--no-fsc", action="store_true", default=None,
                   help="disable the frequency skip connection")
    p.add_argument("--out")
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--log-interval", type=int)
    p.add_argument("--checkpoint-interval", type=int)
    add_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate PNG images from a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    add_config(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("decompose", help="write per-band wavelet images and CSVs")
    p.add_argument("image", help="PNG/PPM input with even dimensions")
    p.add_argument("--levels", type=int)
    p.add_argument("--out")
    add_config(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("spectrum", help="power-spectrum diagnostics of a corpus")
    p.add_argument("dir", help="directory of images")
    p.add_argument("--size", type=int)
    p.add_argument("--out")
    add_config(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("compare", help="spectrum distance between two corpora")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("--size", type=int)
    p.add_argument("--out")
    add_config(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run the invariant suites")
    p.add_argument("--perturb-kernels", type=float, default=None,
                   help="fault-injection test hook: bias the wavelet kernels")
    add_config(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (ValueError, ShapeError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
