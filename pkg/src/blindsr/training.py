"""Data pipeline, Adam training loop, schedule, checkpointing and the
noise-free fine-tune.

Determinism contract: a fixed seed and single-worker sampling give identical
loss logs across runs. All data randomness flows from one numpy generator
held in the train state; per-sample degradations are seeded from it, so
samples can be regenerated independently.
"""

import csv
import json
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .degradation import DegradedSample, degrade, sample_spec
from .kernel_space import PcaProjection
from .losses import (
    LossBreakdown,
    LossWeights,
    NonFiniteLossError,
    degradation_consistency_loss,
    degradation_reconstruction_loss,
    overall_loss,
    reconstruction_loss,
    simulate_lr,
)
from .model import BlindSRNet, ModelConfig, build_model

CHECKPOINT_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class DegradationConfig:
    """Sampling ranges for synthetic degradations (noise on the 0-255 scale)."""

    kernel_width_min: float = 0.2
    kernel_width_max: float = 3.0
    noise_min: float = 0.0
    noise_max: float = 75.0

    @property
    def width_range(self) -> tuple[float, float]:
        return (self.kernel_width_min, self.kernel_width_max)

    @property
    def noise_range(self) -> tuple[float, float]:
        return (self.noise_min, self.noise_max)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainConfig:
    batch: int = 32
    lr_patch: int = 48
    total_iters: int = 500_000
    base_lr: float = 1e-4
    halve_every: int = 200_000  # 0 disables halving (constant rate)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augment: bool = True
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 10_000
    grad_clip: float = 0.0  # 0 disables clipping
    extractor_warmup_iters: int = 0  # joint training from scratch by default
    finetune_iters: int = 100_000
    finetune_lr: float = 1e-4
    # objective weights and ablation toggles
    lambda_re: float = 1.0
    lambda_dr: float = 10.0
    lambda_dc: float = 1.0
    dc_lr_term: bool = True
    dc_kn_term: bool = True

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.lr_patch < 1:
            raise ValueError("lr_patch must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def weights_from_config(config: TrainConfig) -> LossWeights:
    return LossWeights(
        re=config.lambda_re, dr=config.lambda_dr, dc=config.lambda_dc,
        use_dc_lr=config.dc_lr_term, use_dc_kn=config.dc_kn_term,
    )


@dataclass
class TrainState:
    model: BlindSRNet
    model_config: ModelConfig
    train_config: TrainConfig
    degradation_config: DegradationConfig
    adam_m: dict[str, torch.Tensor]
    adam_v: dict[str, torch.Tensor]
    adam_step: int
    iteration: int
    rng: np.random.Generator
    pca_sha256: str = ""


def init_train_state(
    model_config: ModelConfig,
    train_config: TrainConfig,
    degradation_config: DegradationConfig | None = None,
    pca: PcaProjection | None = None,
    device: str = "cpu",
) -> TrainState:
    model = build_model(model_config, pca=pca, seed=train_config.seed).to(device)
    adam_m = {name: torch.zeros_like(p) for name, p in model.named_parameters()}
    adam_v = {name: torch.zeros_like(p) for name, p in model.named_parameters()}
    return TrainState(
        model=model,
        model_config=model_config,
        train_config=train_config,
        degradation_config=degradation_config or DegradationConfig(),
        adam_m=adam_m,
        adam_v=adam_v,
        adam_step=0,
        iteration=0,
        rng=np.random.default_rng([train_config.seed, 1]),
        pca_sha256=pca.sha256() if pca is not None else "",
    )


def lr_schedule(iteration: int, config: TrainConfig) -> float:
    """base_lr halved every ``halve_every`` iterations (closed form)."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    if config.halve_every <= 0:
        return config.base_lr
    return config.base_lr * 0.5 ** (iteration // config.halve_every)


_DIHEDRAL = 8


def _augment(patch: np.ndarray, variant: int) -> np.ndarray:
    """One of the 8 flip x rotation symmetries of the square."""
    out = np.rot90(patch, k=variant % 4)
    if variant >= 4:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def eligible_images(images: list[np.ndarray], hr_patch: int) -> list[int]:
    keep = [i for i, im in enumerate(images) if im.shape[0] >= hr_patch and im.shape[1] >= hr_patch]
    skipped = len(images) - len(keep)
    if skipped:
        warnings.warn(f"skipping {skipped} image(s) smaller than {hr_patch}x{hr_patch}", stacklevel=2)
    if not keep:
        raise ValueError(f"no image is at least {hr_patch}x{hr_patch}")
    return keep


def sample_batch(
    images: list[np.ndarray],
    model_config: ModelConfig,
    train_config: TrainConfig,
    degradation_config: DegradationConfig,
    rng: np.random.Generator,
) -> list[DegradedSample]:
    """Random crops + dihedral augmentation + freshly sampled degradations."""
    s = model_config.scale
    hr_patch = train_config.lr_patch * s
    pool = eligible_images(images, hr_patch)
    batch = []
    for _ in range(train_config.batch):
        img = images[pool[rng.integers(len(pool))]]
        y = int(rng.integers(img.shape[0] - hr_patch + 1))
        x = int(rng.integers(img.shape[1] - hr_patch + 1))
        patch = img[y : y + hr_patch, x : x + hr_patch]
        variant = int(rng.integers(_DIHEDRAL)) if train_config.augment else 0
        patch = _augment(patch, variant)
        spec = sample_spec(
            degradation_config.width_range,
            degradation_config.noise_range,
            s,
            rng,
            kernel_size=model_config.blur_kernel_size,
        )
        batch.append(degrade(patch, spec))
    return batch


def collate(samples: list[DegradedSample], device="cpu", dtype=torch.float32) -> dict[str, torch.Tensor]:
    def stack(arrs, chw: bool) -> torch.Tensor:
        a = np.stack(arrs)
        if chw:
            a = a.transpose(0, 3, 1, 2)
        return torch.from_numpy(np.ascontiguousarray(a)).to(device=device, dtype=dtype)

    return {
        "hr": stack([s.hr_ref for s in samples], True),
        "lr": stack([s.lr for s in samples], True),
        "noise_gt": stack([s.noise_map_gt for s in samples], True),
        "kernel_gt": stack([s.kernel_gt for s in samples], False),
    }


def _adam_update(state: TrainState, lr: float, only_extractor: bool = False) -> None:
    cfg = state.train_config
    state.adam_step += 1
    bc1 = 1.0 - cfg.beta1 ** state.adam_step
    bc2 = 1.0 - cfg.beta2 ** state.adam_step
    with torch.no_grad():
        for name, p in state.model.named_parameters():
            if only_extractor and not name.startswith("extractor."):
                continue
            if p.grad is None:
                raise TrainingError(f"parameter {name!r} received no gradient")
            g = p.grad
            m = state.adam_m[name]
            v = state.adam_v[name]
            m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
            v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
            denom = (v / bc2).sqrt_().add_(cfg.eps)
            p.addcdiv_(m, denom, value=-lr / bc1)


def compute_batch_losses(
    model: BlindSRNet, tensors: dict[str, torch.Tensor], weights: LossWeights
) -> tuple[torch.Tensor, LossBreakdown]:
    """Forward pass plus all active loss terms on one collated batch."""
    hr, lr = tensors["hr"], tensors["lr"]
    n_gt, k_gt = tensors["noise_gt"], tensors["kernel_gt"]
    s = model.config.scale

    sr, est = model(lr)
    re = reconstruction_loss(sr, hr)
    dr = degradation_reconstruction_loss(est.noise_map, est.kernel, n_gt, k_gt)
    dc_lr = dc_noise = dc_kernel = torch.zeros((), dtype=hr.dtype, device=hr.device)
    if weights.dc_active:
        with torch.no_grad():  # pre-clamp LR target from the ground-truth pipeline
            lr_target = simulate_lr(hr, k_gt, n_gt, s)
        dc_lr, dc_noise, dc_kernel = degradation_consistency_loss(
            hr, lr_target, est.kernel, est.noise_map, model.extractor, s
        )
        if not weights.use_dc_lr:
            dc_lr = torch.zeros_like(dc_lr)
        if not weights.use_dc_kn:
            dc_noise = torch.zeros_like(dc_noise)
            dc_kernel = torch.zeros_like(dc_kernel)
    total = overall_loss(re, dr, dc_lr, dc_noise, dc_kernel, weights)
    scalars = [float(t.detach()) for t in (re, dr, dc_lr, dc_kernel, dc_noise, total)]
    breakdown = LossBreakdown(
        re=scalars[0], dr=scalars[1], dc_lr=scalars[2],
        dc_kernel=scalars[3], dc_noise=scalars[4], total=scalars[5],
    )
    return total, breakdown


def train_step(
    state: TrainState, batch: list[DegradedSample], weights: LossWeights
) -> LossBreakdown:
    """One optimization step; advances the iteration counter."""
    model = state.model
    model.train()
    device = next(model.parameters()).device
    tensors = collate(batch, device=device)
    rate = lr_schedule(state.iteration, state.train_config)

    model.zero_grad(set_to_none=True)
    total, breakdown = compute_batch_losses(model, tensors, weights)
    total.backward()
    if state.train_config.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(model.parameters(), state.train_config.grad_clip)
    warmup = state.iteration < state.train_config.extractor_warmup_iters
    _adam_update(state, rate, only_extractor=warmup)
    state.iteration += 1
    return breakdown


class TrainLog:
    """CSV loss log: one row per logging interval."""

    FIELDS = ("iteration",) + LossBreakdown.CSV_FIELDS + ("lr_rate",)

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.rows: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(self.FIELDS)

    def append(self, iteration: int, breakdown: LossBreakdown, rate: float) -> None:
        row = {"iteration": iteration, "lr_rate": rate}
        row.update({k: getattr(breakdown, k) for k in LossBreakdown.CSV_FIELDS})
        self.rows.append(row)
        if self.path:
            with open(self.path, "a", newline="") as f:
                csv.writer(f).writerow([row[k] for k in self.FIELDS])


def train(
    state: TrainState,
    images: list[np.ndarray],
    weights: LossWeights | None = None,
    n_iters: int | None = None,
    log_path=None,
    checkpoint_dir=None,
) -> TrainLog:
    """Run the loop for ``n_iters`` steps (default: up to config.total_iters).

    Checkpoints every ``checkpoint_every`` steps when ``checkpoint_dir`` is
    given; a non-finite loss aborts with a pointer to the last good checkpoint.
    """
    weights = weights or LossWeights()
    cfg = state.train_config
    if n_iters is None:
        n_iters = max(cfg.total_iters - state.iteration, 0)
    log = TrainLog(log_path)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    last_good = None

    for step in range(1, n_iters + 1):
        batch = sample_batch(images, state.model_config, cfg, state.degradation_config, state.rng)
        it = state.iteration
        rate = lr_schedule(it, cfg)
        try:
            breakdown = train_step(state, batch, weights)
        except NonFiniteLossError as err:
            ref = f"last good checkpoint: {last_good}" if last_good else "no checkpoint saved yet"
            raise TrainingError(f"aborting at iteration {it}: {err} ({ref})") from err
        if cfg.log_every > 0 and (state.iteration % cfg.log_every == 0 or step == n_iters):
            log.append(state.iteration, breakdown, rate)
        if ckpt_dir and cfg.checkpoint_every > 0 and state.iteration % cfg.checkpoint_every == 0:
            last_good = ckpt_dir / f"iter_{state.iteration:08d}.npz"
            save_checkpoint(state, last_good)
    return log


def finetune_noise_free(
    state: TrainState,
    images: list[np.ndarray],
    weights: LossWeights | None = None,
    n_iters: int | None = None,
    log_path=None,
    checkpoint_dir=None,
) -> TrainLog:
    """Continue training with the noise level pinned to 0 at a constant rate."""
    cfg = state.train_config
    state.train_config = replace(
        cfg, base_lr=cfg.finetune_lr, halve_every=0
    )
    state.degradation_config = replace(state.degradation_config, noise_min=0.0, noise_max=0.0)
    if n_iters is None:
        n_iters = cfg.finetune_iters
    return train(state, images, weights, n_iters, log_path, checkpoint_dir)


def save_checkpoint(state: TrainState, path) -> None:
    """Versioned archive: configs + every named parameter/moment array + RNG state."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "iteration": state.iteration,
        "adam_step": state.adam_step,
        "model_config": state.model_config.to_dict(),
        "train_config": state.train_config.to_dict(),
        "degradation_config": state.degradation_config.to_dict(),
        "pca_sha256": state.pca_sha256,
        "rng_state": state.rng.bit_generator.state,
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for name, p in state.model.named_parameters():
        arrays[f"param/{name}"] = p.detach().cpu().numpy().astype("<f4")
        arrays[f"adam_m/{name}"] = state.adam_m[name].cpu().numpy().astype("<f4")
        arrays[f"adam_v/{name}"] = state.adam_v[name].cpu().numpy().astype("<f4")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)
    if path.suffix != ".npz":  # numpy appends .npz; keep the requested name
        (path.parent / (path.name + ".npz")).replace(path)


def load_checkpoint(path, expected_config: ModelConfig | None = None, device: str = "cpu") -> TrainState:
    """Rebuild a TrainState; fails loudly on any parameter name/shape mismatch."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        saved = {k: data[k] for k in data.files if k != "__meta__"}

    config = expected_config or ModelConfig(**meta["model_config"])
    model = BlindSRNet(config).to(device)
    params = dict(model.named_parameters())

    saved_names = {k.split("/", 1)[1] for k in saved if k.startswith("param/")}
    for name in sorted(params.keys() | saved_names):
        if name not in saved_names:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        if name not in params:
            raise ValueError(f"checkpoint has unexpected parameter {name!r}")
        have = tuple(saved[f"param/{name}"].shape)
        want = tuple(params[name].shape)
        if have != want:
            raise ValueError(f"shape mismatch for {name!r}: checkpoint {have}, model {want}")

    adam_m, adam_v = {}, {}
    with torch.no_grad():
        for name, p in params.items():
            p.copy_(torch.from_numpy(saved[f"param/{name}"].copy()))
            adam_m[name] = torch.from_numpy(saved[f"adam_m/{name}"].copy()).to(device)
            adam_v[name] = torch.from_numpy(saved[f"adam_v/{name}"].copy()).to(device)

    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(
        model=model,
        model_config=config,
        train_config=TrainConfig(**meta["train_config"]),
        degradation_config=DegradationConfig(**meta["degradation_config"]),
        adam_m=adam_m,
        adam_v=adam_v,
        adam_step=meta["adam_step"],
        iteration=meta["iteration"],
        rng=rng,
        pca_sha256=meta.get("pca_sha256", ""),
    )
