"""Shared test fixtures: synthetic images and desk-scale model configs."""

import numpy as np

from blindsr import ModelConfig
from blindsr.training import DegradationConfig, TrainConfig


def tiny_model_config(**overrides) -> ModelConfig:
    """The small config used for gradient checks and desk-scale training."""
    base = dict(
        channels=8, n_groups=1, n_rcab_per_group=2, ca_reduction=4,
        blur_kernel_size=5, embed_dim=15, scale=2,
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_train_config(**overrides) -> TrainConfig:
    base = dict(batch=4, lr_patch=12, base_lr=1e-3, halve_every=0,
                augment=True, seed=0, log_every=1, checkpoint_every=0)
    base.update(overrides)
    return TrainConfig(**base)


def fixed_degradation(width=1.3, noise=15.0) -> DegradationConfig:
    return DegradationConfig(
        kernel_width_min=width, kernel_width_max=width,
        noise_min=noise, noise_max=noise,
    )


def make_image(size: int, seed: int) -> np.ndarray:
    """A small synthetic photo stand-in: smooth gradients, shapes and texture."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    img = np.zeros((size, size, 3), dtype=np.float64)
    for c in range(3):
        a, b, ph = rng.uniform(0.2, 0.8), rng.uniform(1, 4), rng.uniform(0, 2 * np.pi)
        img[:, :, c] = 0.5 + 0.3 * np.sin(2 * np.pi * b * (xx * rng.uniform(-1, 1)
                                                           + yy * rng.uniform(-1, 1)) + ph) * a
    for _ in range(rng.integers(2, 5)):
        y0, x0 = rng.integers(0, size, 2)
        hgt, wid = rng.integers(size // 6, size // 2, 2)
        color = rng.uniform(0, 1, 3)
        img[y0 : y0 + hgt, x0 : x0 + wid] = 0.6 * img[y0 : y0 + hgt, x0 : x0 + wid] + 0.4 * color
    img += rng.normal(0, 0.02, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_images(n: int, size: int, seed: int) -> list[np.ndarray]:
    return [make_image(size, seed * 10_000 + i) for i in range(n)]
