"""Command-line interface: degrade | pca | train | finetune-nf | infer | eval | window.

Exit codes: 0 success, 1 usage error, 2 runtime failure. All randomness in a
run flows from its --seed; file-config values can be overridden with repeated
``--override section.key=value`` flags (flags win). Each run writes the
effective config into its output directory; ``--dry-run`` validates and
prints it without touching the filesystem.
"""

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import Config, PathsConfig, format_config, load_config, save_config
from .degradation import DegradationSpec, degrade
from .evaluation import (
    BenchmarkGrid,
    bicubic_baseline,
    degradation_window,
    run_benchmark,
)
from .fileio import list_images, load_png, load_tensor, save_png, save_tensor
from .kernel_space import build_kernel_pool, compute_pca, projection_from_matrix
from .model import sr_function
from .training import (
    finetune_noise_free,
    init_train_state,
    load_checkpoint,
    save_checkpoint,
    train,
    weights_from_config,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

OUT_DIR_ENV = "BLINDSR_OUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError as err:
        raise UsageError(f"cannot parse float list {text!r}") from err


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip() != "")
    except ValueError as err:
        raise UsageError(f"cannot parse int list {text!r}") from err


def _seed(args) -> int:
    return args.seed if args.seed is not None else 0


def _out_dir(args) -> Path:
    out = args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _snapshot(config: Config, out_dir: Path) -> None:
    save_config(config, out_dir / "effective-config.ini")


def _load_cli_config(args) -> Config:
    overrides = tuple(args.override or ())
    config = load_config(getattr(args, "config", None), overrides)
    if getattr(args, "seed", None) is not None:
        config.train = replace(config.train, seed=args.seed)
    if getattr(args, "data_dir", None):
        config.paths = replace(config.paths, data_dir=args.data_dir)
    if getattr(args, "out_dir", None):
        config.paths = replace(config.paths, out_dir=args.out_dir)
    return config


def _load_images(directory) -> list[np.ndarray]:
    return [load_png(p) for p in list_images(directory)]


def _resolve_pca(config: Config, out_dir: Path, dry_run: bool = False):
    """Load the projection named in [paths] pca, or build and save a default one."""
    if config.paths.pca:
        return projection_from_matrix(load_tensor(config.paths.pca))
    pool = build_kernel_pool(
        10_000,
        (config.degradation.kernel_width_min, config.degradation.kernel_width_max),
        seed=config.train.seed,
        kernel_size=config.model.blur_kernel_size,
    )
    projection = compute_pca(pool, dim=config.model.embed_dim)
    if not dry_run:
        save_tensor(out_dir / "pca.bsrt", projection.matrix)
    return projection


def cmd_degrade(args) -> int:
    out_dir = _out_dir(args)
    hr = load_png(args.input)
    hr = hr[: hr.shape[0] - hr.shape[0] % args.scale, : hr.shape[1] - hr.shape[1] % args.scale]
    spec = DegradationSpec(
        kernel_width=args.kernel_width, noise_level=args.noise, scale=args.scale,
        seed=_seed(args), kernel_size=args.kernel_size,
    )
    sample = degrade(hr, spec)
    stem = Path(args.input).stem
    save_png(out_dir / f"{stem}_x{args.scale}_lr.png", sample.lr)
    save_tensor(out_dir / f"{stem}_x{args.scale}_kernel.bsrt", sample.kernel_gt)
    save_tensor(out_dir / f"{stem}_x{args.scale}_noise.bsrt", sample.noise_map_gt)
    config = _load_cli_config(args)
    config.degradation = replace(
        config.degradation,
        kernel_width_min=args.kernel_width, kernel_width_max=args.kernel_width,
        noise_min=args.noise, noise_max=args.noise,
    )
    _snapshot(config, out_dir)
    print(f"wrote {out_dir / f'{stem}_x{args.scale}_lr.png'}")
    return EXIT_OK


def cmd_pca(args) -> int:
    out_dir = _out_dir(args)
    pool = build_kernel_pool(
        args.pool_size, (args.width_min, args.width_max),
        seed=_seed(args), kernel_size=args.kernel_size,
    )
    projection = compute_pca(pool, dim=args.dim)
    save_tensor(out_dir / "pca.bsrt", projection.matrix)
    _snapshot(_load_cli_config(args), out_dir)
    print(f"wrote {out_dir / 'pca.bsrt'} "
          f"(dim {projection.dim}, explained variance {projection.explained_variance:.6f})")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_cli_config(args)
    if args.dry_run:
        print(format_config(config))
        return EXIT_OK
    if not config.paths.data_dir:
        raise UsageError("no data directory (set --data-dir or [paths] data_dir)")
    out_dir = _out_dir(args)
    _snapshot(config, out_dir)
    images = _load_images(config.paths.data_dir)
    device = args.device

    if config.paths.checkpoint:
        state = load_checkpoint(config.paths.checkpoint, device=device)
        state.train_config = config.train
        state.degradation_config = config.degradation
    else:
        pca = _resolve_pca(config, out_dir)
        state = init_train_state(config.model, config.train, config.degradation,
                                 pca=pca, device=device)
    n_iters = args.iters if args.iters is not None else None
    log = train(
        state, images, weights_from_config(config.train), n_iters=n_iters,
        log_path=out_dir / "train_log.csv", checkpoint_dir=out_dir / "checkpoints",
    )
    final = out_dir / "checkpoint_final.npz"
    save_checkpoint(state, final)
    last = log.rows[-1] if log.rows else {}
    print(f"trained to iteration {state.iteration}; final checkpoint {final}")
    if last:
        print(f"last logged loss: total={last['total']:.6f} (re={last['re']:.6f})")
    return EXIT_OK


def cmd_finetune_nf(args) -> int:
    config = _load_cli_config(args)
    if args.dry_run:
        print(format_config(config))
        return EXIT_OK
    out_dir = _out_dir(args)
    state = load_checkpoint(args.checkpoint, device=args.device)
    if args.seed is not None:
        state.rng = np.random.default_rng([args.seed, 1])
    if args.data_dir:
        data_dir = args.data_dir
    elif config.paths.data_dir:
        data_dir = config.paths.data_dir
    else:
        raise UsageError("no data directory (set --data-dir or [paths] data_dir)")
    _snapshot(config, out_dir)
    images = _load_images(data_dir)
    finetune_noise_free(
        state, images, weights_from_config(state.train_config), n_iters=args.iters,
        log_path=out_dir / "finetune_log.csv", checkpoint_dir=out_dir / "checkpoints",
    )
    final = out_dir / "checkpoint_nf.npz"
    save_checkpoint(state, final)
    print(f"noise-free fine-tune done at iteration {state.iteration}; wrote {final}")
    return EXIT_OK


def cmd_infer(args) -> int:
    out_dir = _out_dir(args)
    state = load_checkpoint(args.checkpoint, device=args.device)
    sr_fn = sr_function(state.model)
    lr = load_png(args.input)
    sr = sr_fn(lr, state.model_config.scale)
    out_path = Path(args.out) if args.out else out_dir / f"{Path(args.input).stem}_sr.png"
    save_png(out_path, sr)
    _snapshot(
        Config(model=state.model_config, train=state.train_config,
               degradation=state.degradation_config,
               paths=PathsConfig(checkpoint=str(args.checkpoint))),
        out_dir,
    )
    if args.save_degradation:
        import torch

        from .torch_ops import to_image, to_tensor
        with torch.no_grad():
            est = state.model.extractor(to_tensor(lr, device=args.device))
        save_tensor(out_path.with_suffix(".kernel.bsrt"), est.kernel[0].cpu().numpy())
        save_tensor(out_path.with_suffix(".noise.bsrt"), to_image(est.noise_map))
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_cli_config(args)
    if args.dry_run:
        print(format_config(config))
        return EXIT_OK
    out_dir = _out_dir(args)
    data_dir = args.data_dir or config.paths.data_dir
    if not data_dir:
        raise UsageError("no data directory (set --data-dir or [paths] data_dir)")
    dataset_name = args.dataset_name or Path(data_dir).name
    images = _load_images(data_dir)

    models = {}
    described = []
    for ckpt in args.checkpoint or []:
        state = load_checkpoint(ckpt, device=args.device)
        scale = state.model_config.scale
        models[scale] = sr_function(state.model)
        described.append(f"x{scale}:{ckpt}")
    scales = args.scales or (tuple(sorted(models)) if models else (2, 3, 4))
    if args.baseline or not models:
        for s in scales:
            models.setdefault(s, bicubic_baseline)
            described.append(f"x{s}:bicubic")

    grid = BenchmarkGrid(
        scales=tuple(scales),
        kernel_widths=args.kernel_widths,
        noise_levels=args.noise_levels,
    )
    report = run_benchmark(
        models, {dataset_name: images}, grid, seed=_seed(args),
        kernel_size=args.kernel_size, metadata={"model": "; ".join(described)},
    )
    _snapshot(config, out_dir)
    report.to_csv(out_dir / "report.csv")
    text = report.to_markdown(out_dir / "report.md")
    print(text)
    print(f"wrote {out_dir / 'report.csv'} and {out_dir / 'report.md'}")
    return EXIT_OK


def cmd_window(args) -> int:
    out_dir = _out_dir(args)
    image = load_png(args.input)
    tiles, manifest = degradation_window(
        image, args.scale, noise_levels=args.noise_levels,
        kernel_widths=args.kernel_widths, seed=_seed(args), kernel_size=args.kernel_size,
    )
    stem = Path(args.input).stem
    save_png(out_dir / f"{stem}_window_x{args.scale}.png", tiles)
    import csv

    manifest_path = out_dir / f"{stem}_window_x{args.scale}_manifest.csv"
    with open(manifest_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(manifest[0].keys()))
        writer.writeheader()
        writer.writerows(manifest)
    _snapshot(_load_cli_config(args), out_dir)
    print(f"wrote {len(manifest)} tiles to {out_dir / f'{stem}_window_x{args.scale}.png'}")
    return EXIT_OK


def _add_common(parser, config_file: bool = False, dry_run: bool = False):
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed for this run (default 0; finetune-nf keeps "
                             "the checkpoint's RNG state unless one is given)")
    parser.add_argument("--out-dir", default=None,
                        help=f"output directory (default ${OUT_DIR_ENV} or .)")
    parser.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE",
                        help="config override; repeatable; wins over file values")
    if config_file:
        parser.add_argument("--config", default=None, help="INI config file")
    if dry_run:
        parser.add_argument("--dry-run", action="store_true",
                            help="validate and print the effective config, no side effects")


def build_parser() -> _Parser:
    parser = _Parser(prog="blindsr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="synthesize a degraded LR image from an HR image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--kernel-width", type=float, default=1.3)
    p.add_argument("--noise", type=float, default=15.0)
    p.add_argument("--kernel-size", type=int, default=15)
    _add_common(p)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("pca", help="build the blur-kernel PCA projection")
    p.add_argument("--pool-size", type=int, default=10_000)
    p.add_argument("--width-min", type=float, default=0.2)
    p.add_argument("--width-max", type=float, default=3.0)
    p.add_argument("--kernel-size", type=int, default=15)
    p.add_argument("--dim", type=int, default=15)
    _add_common(p)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("train", help="train the model")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--iters", type=int, default=None, help="override the iteration budget")
    p.add_argument("--device", default="cpu")
    _add_common(p, config_file=True, dry_run=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune-nf", help="noise-free fine-tune from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--device", default="cpu")
    _add_common(p, config_file=True, dry_run=True)
    p.set_defaults(func=cmd_finetune_nf)

    p = sub.add_parser("infer", help="super-resolve one image with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--device", default="cpu")
    p.add_argument("--save-degradation", action="store_true",
                   help="also write the estimated kernel and noise map")
    _add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="benchmark a model (or the bicubic baseline) over a grid")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--dataset-name", default=None)
    p.add_argument("--checkpoint", action="append", help="repeatable; one per scale")
    p.add_argument("--baseline", action="store_true", help="use the bicubic baseline")
    p.add_argument("--scales", type=_int_list, default=None)
    p.add_argument("--kernel-widths", type=_float_list, default=(0.2, 1.3, 2.6))
    p.add_argument("--noise-levels", type=_float_list, default=(15.0, 50.0))
    p.add_argument("--kernel-size", type=int, default=15)
    p.add_argument("--device", default="cpu")
    _add_common(p, config_file=True, dry_run=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("window", help="degradation parameter window for one image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--noise-levels", type=_float_list, default=(0.0, 15.0, 30.0, 45.0, 60.0, 75.0))
    p.add_argument("--kernel-widths", type=_float_list, default=(0.2, 1.2, 2.1, 3.0))
    p.add_argument("--kernel-size", type=int, default=15)
    _add_common(p)
    p.set_defaults(func=cmd_window)

    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
