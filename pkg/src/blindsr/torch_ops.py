"""Differentiable torch counterparts of the degradation ops.

The consistency loss re-degrades HR batches with *estimated* kernels and
noise maps, so blur and bicubic downsampling must carry gradients. Weights
for the downsample come from the same contribution table as the numpy
pipeline, keeping the two paths numerically aligned.
"""

import functools

import numpy as np
import torch
import torch.nn.functional as F

from .degradation import resize_contributions


def to_tensor(image: np.ndarray, device="cpu", dtype=torch.float32) -> torch.Tensor:
    """HWC [0,1] numpy image -> 1CHW tensor."""
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).to(
        device=device, dtype=dtype
    )[None]


def to_image(tensor: torch.Tensor) -> np.ndarray:
    """1CHW or CHW tensor -> HWC float32 numpy image (no clamping)."""
    if tensor.dim() == 4:
        tensor = tensor[0]
    return tensor.detach().cpu().float().numpy().transpose(1, 2, 0)


def blur_reflect(x: torch.Tensor, kernels: torch.Tensor) -> torch.Tensor:
    """Correlate each sample of an NCHW batch with its own 2-D kernel.

    ``kernels`` is (N, kh, kw) or (kh, kw) shared across the batch; reflect
    padding as in the numpy pipeline. Implemented with one grouped conv, which
    is per-sample identical to looping.
    """
    n, c, h, w = x.shape
    if kernels.dim() == 2:
        kernels = kernels[None].expand(n, -1, -1)
    kh, kw = kernels.shape[-2:]
    if kh > h or kw > w:
        raise ValueError(f"kernel {kh}x{kw} larger than image {h}x{w}")
    pad = (kw // 2, kw // 2, kh // 2, kh // 2)
    xp = F.pad(x.reshape(1, n * c, h, w), pad, mode="reflect")
    weight = kernels[:, None, :, :].expand(n, c, kh, kw).reshape(n * c, 1, kh, kw)
    out = F.conv2d(xp, weight, groups=n * c)
    return out.reshape(n, c, h, w)


@functools.lru_cache(maxsize=64)
def _resize_matrix(n_in: int, n_out: int, antialias: bool) -> np.ndarray:
    idx, w = resize_contributions(n_in, n_out, antialias)
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for u in range(n_out):
        np.add.at(mat[u], idx[u], w[u])
    return mat


def _resize_matrix_t(n_in: int, n_out: int, antialias: bool, dtype, device) -> torch.Tensor:
    return torch.from_numpy(_resize_matrix(n_in, n_out, antialias)).to(dtype=dtype, device=device)


def bicubic_downsample(x: torch.Tensor, s: int) -> torch.Tensor:
    """Antialiased cubic downsample of an NCHW batch by integer factor s."""
    n, c, h, w = x.shape
    if h % s != 0 or w % s != 0:
        raise ValueError(f"dims {h}x{w} not divisible by scale {s}")
    if s == 1:
        return x
    mh = _resize_matrix_t(h, h // s, True, x.dtype, x.device)
    mw = _resize_matrix_t(w, w // s, True, x.dtype, x.device)
    return torch.einsum("oh,nchw,pw->ncop", mh, x, mw)


def bicubic_upsample(x: torch.Tensor, s: int) -> torch.Tensor:
    """Cubic upsample of an NCHW batch by integer factor s."""
    if s == 1:
        return x
    n, c, h, w = x.shape
    mh = _resize_matrix_t(h, h * s, False, x.dtype, x.device)
    mw = _resize_matrix_t(w, w * s, False, x.dtype, x.device)
    return torch.einsum("oh,nchw,pw->ncop", mh, x, mw)


def dynamic_conv(x: torch.Tensor, weight_field: torch.Tensor) -> torch.Tensor:
    """Spatially-variant convolution: per-pixel k*k kernels, zero padding.

    ``weight_field`` is (N, k*k, H, W); the kernel at each position is shared
    across the channels of ``x``.
    """
    n, c, h, w = x.shape
    k2 = weight_field.shape[1]
    k = int(round(k2 ** 0.5))
    if k * k != k2:
        raise ValueError(f"weight field channel count {k2} is not a square")
    if weight_field.shape[-2:] != (h, w):
        raise ValueError(
            f"weight field spatial dims {tuple(weight_field.shape[-2:])} != image {h}x{w}"
        )
    cols = F.unfold(x, kernel_size=k, padding=k // 2)  # (N, C*k2, H*W)
    cols = cols.reshape(n, c, k2, h * w)
    out = (cols * weight_field.reshape(n, 1, k2, h * w)).sum(dim=2)
    return out.reshape(n, c, h, w)
