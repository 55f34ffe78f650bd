"""Synthetic degradation pipeline: blur -> bicubic downsample -> AWGN.

Images are float32 HWC arrays in [0, 1]. Noise levels are specified on the
8-bit scale (sigma 15 means 15/255 on unit-range pixels). Every degraded
sample is a pure function of (hr, spec): the RNG is seeded per sample.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels

DEFAULT_KERNEL_SIZE = 15
WIDTH_RANGE = (0.2, 3.0)
NOISE_RANGE = (0.0, 75.0)


@dataclass(frozen=True)
class DegradationSpec:
    """One degradation recipe: kernel width, noise level (0-255 scale), scale, seed."""

    kernel_width: float
    noise_level: float
    scale: int
    seed: int
    kernel_size: int = DEFAULT_KERNEL_SIZE

    def __post_init__(self):
        if self.kernel_width <= 0:
            raise ValueError(f"kernel_width must be > 0, got {self.kernel_width}")
        if self.noise_level < 0:
            raise ValueError(f"noise_level must be >= 0, got {self.noise_level}")
        if self.scale not in (1, 2, 3, 4):
            raise ValueError(f"scale must be in {{1, 2, 3, 4}}, got {self.scale}")
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")


@dataclass(frozen=True)
class DegradedSample:
    """A realized degradation: LR image plus the ground-truth kernel and noise map.

    Invariant: lr == clamp(bicubic_downsample(blur(hr_ref, kernel_gt), scale) + noise_map_gt).
    """

    lr: np.ndarray
    kernel_gt: np.ndarray
    noise_map_gt: np.ndarray
    spec: DegradationSpec
    hr_ref: np.ndarray


def validate_image(image: np.ndarray) -> None:
    if image.ndim != 3:
        raise ValueError(f"image must be HWC, got shape {image.shape}")
    h, w, c = image.shape
    if h < 1 or w < 1:
        raise ValueError(f"image must be at least 1x1, got {h}x{w}")
    if c not in (1, 3):
        raise ValueError(f"image must have 1 or 3 channels, got {c}")


def gaussian_kernel(width: float, size: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """Isotropic Gaussian blur kernel on a size x size grid, normalized to sum 1."""
    if width <= 0:
        raise ValueError(f"width must be > 0, got {width}")
    if size % 2 == 0 or size < 1:
        raise ValueError(f"size must be odd and positive, got {size}")
    c = (size - 1) / 2.0
    ax = np.arange(size, dtype=np.float64) - c
    d2 = ax[:, None] ** 2 + ax[None, :] ** 2
    k = np.exp(-d2 / (2.0 * width * width))
    return k / k.sum()


def blur(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate each channel with the kernel; reflect padding, same output shape."""
    validate_image(image)
    if kernel.ndim != 2:
        raise ValueError(f"kernel must be 2-D, got shape {kernel.shape}")
    if kernel.shape[0] > image.shape[0] or kernel.shape[1] > image.shape[1]:
        raise ValueError(
            f"kernel {kernel.shape} larger than image {image.shape[:2]} in some dimension"
        )
    return kernels.correlate2d_reflect(image, kernel)


def _cubic(x: np.ndarray) -> np.ndarray:
    # piecewise cubic convolution kernel, a = -0.5
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    return np.where(
        ax <= 1.0,
        1.5 * ax3 - 2.5 * ax2 + 1.0,
        np.where(ax < 2.0, -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0, 0.0),
    )


def resize_contributions(n_in: int, n_out: int, antialias: bool = True):
    """Per-output-pixel source indices and weights for 1-D cubic resampling.

    For downscale the kernel support is widened by 1/scale (antialiasing) and
    the sampled weights are renormalized to sum 1; out-of-range indices are
    clamped to the border. Returns (indices (n_out, taps) int64, weights
    (n_out, taps) float64).
    """
    scale = n_out / n_in
    kscale = max(1.0 / scale, 1.0) if antialias else 1.0
    x = (np.arange(n_out, dtype=np.float64) + 0.5) / scale - 0.5
    radius = 2.0 * kscale
    left = np.floor(x - radius).astype(np.int64) + 1
    taps = int(np.ceil(2.0 * radius)) + 2
    idx = left[:, None] + np.arange(taps, dtype=np.int64)[None, :]
    w = _cubic((x[:, None] - idx) / kscale) / kscale
    w /= w.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, n_in - 1), w


def _resample(image: np.ndarray, n_out_h: int, n_out_w: int, antialias: bool) -> np.ndarray:
    h, w, _ = image.shape
    idx_h, w_h = resize_contributions(h, n_out_h, antialias)
    out = kernels.resample_axis0(image, idx_h, w_h)
    idx_w, w_w = resize_contributions(w, n_out_w, antialias)
    out = kernels.resample_axis0(np.ascontiguousarray(out.transpose(1, 0, 2)), idx_w, w_w)
    return np.ascontiguousarray(out.transpose(1, 0, 2))


def bicubic_downsample(image: np.ndarray, s: int) -> np.ndarray:
    """Antialiased cubic-convolution downsampling by an integer factor."""
    validate_image(image)
    if s < 1 or int(s) != s:
        raise ValueError(f"scale must be a positive integer, got {s}")
    h, w, _ = image.shape
    if h % s != 0 or w % s != 0:
        raise ValueError(f"image dims {h}x{w} not divisible by scale {s}; crop first")
    if s == 1:
        return image.astype(np.float32)
    return _resample(image, h // s, w // s, antialias=True)


def bicubic_upsample(image: np.ndarray, s: int) -> np.ndarray:
    """Cubic-convolution upsampling by an integer factor (no antialiasing needed)."""
    validate_image(image)
    if s < 1 or int(s) != s:
        raise ValueError(f"scale must be a positive integer, got {s}")
    if s == 1:
        return image.astype(np.float32)
    h, w, _ = image.shape
    return _resample(image, h * s, w * s, antialias=False)


def add_awgn(image: np.ndarray, sigma: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Add white Gaussian noise with std sigma/255; returns (clamped image, pre-clamp noise map).

    ``rng`` is a seed or numpy Generator; the same seed yields a bit-identical map.
    """
    validate_image(image)
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    gen = np.random.default_rng(rng)
    noise = (gen.standard_normal(image.shape) * (sigma / 255.0)).astype(np.float32)
    noisy = np.clip(image.astype(np.float32) + noise, 0.0, 1.0)
    return noisy, noise


def degrade(hr: np.ndarray, spec: DegradationSpec, kernel: np.ndarray | None = None) -> DegradedSample:
    """Run blur -> bicubic downsample -> AWGN on an HR image.

    ``kernel`` overrides the Gaussian kernel derived from the spec (used by
    tests and the degradation window's near-delta tile).
    """
    validate_image(hr)
    if kernel is None:
        kernel = gaussian_kernel(spec.kernel_width, spec.kernel_size)
    blurred = blur(hr, kernel)
    lr_clean = bicubic_downsample(blurred, spec.scale)
    lr, noise = add_awgn(lr_clean, spec.noise_level, spec.seed)
    return DegradedSample(lr=lr, kernel_gt=kernel, noise_map_gt=noise, spec=spec, hr_ref=hr)


def sample_spec(
    width_range: tuple[float, float],
    noise_range: tuple[float, float],
    scale: int,
    rng,
    kernel_size: int = DEFAULT_KERNEL_SIZE,
) -> DegradationSpec:
    """Draw a random spec: width and noise uniform over their ranges, fresh seed."""
    if width_range[0] > width_range[1] or width_range[0] <= 0:
        raise ValueError(f"invalid kernel width range {width_range}")
    if noise_range[0] > noise_range[1] or noise_range[0] < 0:
        raise ValueError(f"invalid noise range {noise_range}")
    gen = np.random.default_rng(rng)
    return DegradationSpec(
        kernel_width=float(gen.uniform(*width_range)),
        noise_level=float(gen.uniform(*noise_range)),
        scale=scale,
        seed=int(gen.integers(0, 2**63)),
        kernel_size=kernel_size,
    )


def noise_free(spec: DegradationSpec) -> DegradationSpec:
    return replace(spec, noise_level=0.0)
