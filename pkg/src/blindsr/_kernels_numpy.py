"""Pure-numpy implementations of the hot image kernels.

These are the fallback backend for :mod:`blindsr.kernels`; a compiled
extension with identical semantics is preferred when available. All
functions take and return float32 HWC arrays but accumulate in float64
so both backends agree with a double-precision oracle to ~1e-7.
"""

import numpy as np


def correlate2d_reflect(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel 2-D correlation with mirror (no edge repeat) padding.

    out[y, x, c] = sum_ij kernel[i, j] * image[y + i - ph, x + j - pw, c]
    with out-of-range coordinates reflected about the border pixel.
    """
    h, w, _ = image.shape
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(image, ((ph, ph), (pw, pw), (0, 0)), mode="reflect").astype(np.float64)
    out = np.zeros(image.shape, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * padded[i : i + h, j : j + w, :]
    return out.astype(np.float32)


def dynamic_conv(image: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Spatially-variant convolution with zero padding.

    ``weights`` is (H, W, k*k); the per-pixel kernel weights[y, x] is applied
    to every channel of the k*k neighbourhood centred on (y, x).
    """
    h, w, c = image.shape
    k2 = weights.shape[2]
    k = int(round(k2 ** 0.5))
    p = k // 2
    padded = np.zeros((h + 2 * p, w + 2 * p, c), dtype=np.float64)
    padded[p : p + h, p : p + w, :] = image
    out = np.zeros((h, w, c), dtype=np.float64)
    w64 = weights.astype(np.float64)
    for i in range(k):
        for j in range(k):
            out += w64[:, :, i * k + j, None] * padded[i : i + h, j : j + w, :]
    return out.astype(np.float32)


def resample_axis0(image: np.ndarray, indices: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted gather along axis 0: out[u] = sum_t weights[u, t] * image[indices[u, t]]."""
    gathered = image[indices].astype(np.float64)  # (n_out, taps, ...)
    w = weights.reshape(weights.shape + (1,) * (gathered.ndim - 2))
    return (gathered * w).sum(axis=1).astype(np.float32)
