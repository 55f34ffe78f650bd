"""Backend dispatch for the hot image kernels.

A Cython extension (``blindsr._kernels_native``) provides the fast path;
``blindsr._kernels_numpy`` is the pure-Python fallback used when the
extension is missing or when ``BLINDSR_BACKEND=python`` is set. Both
backends implement the same contracts and are cross-checked in the test
suite; ``benchmarks/bench_kernels.py`` compares their speed.
"""

import os

import numpy as np

from . import _kernels_numpy

try:
    from . import _kernels_native
except ImportError:  # pragma: no cover - depends on build environment
    _kernels_native = None

_backend = "numpy"
if _kernels_native is not None and os.environ.get("BLINDSR_BACKEND", "") != "python":
    _backend = "native"


def available_backends() -> tuple[str, ...]:
    if _kernels_native is None:
        return ("numpy",)
    return ("native", "numpy")


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    _backend = name


def _as_f32c(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float32)


def correlate2d_reflect(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate every channel of an HWC image with one 2-D kernel, reflect padding."""
    if _backend == "native":
        return _kernels_native.correlate2d_reflect(
            _as_f32c(image), np.ascontiguousarray(kernel, dtype=np.float64)
        )
    return _kernels_numpy.correlate2d_reflect(image, kernel)


def dynamic_conv(image: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Apply per-pixel k*k kernels (H, W, k*k) to an HWC image, zero padding."""
    if _backend == "native":
        return _kernels_native.dynamic_conv(_as_f32c(image), _as_f32c(weights))
    return _kernels_numpy.dynamic_conv(image, weights)


def resample_axis0(image: np.ndarray, indices: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted gather-resample along axis 0 of an HWC image."""
    if _backend == "native" and image.ndim == 3:
        return _kernels_native.resample_axis0(
            _as_f32c(image),
            np.ascontiguousarray(indices, dtype=np.int64),
            np.ascontiguousarray(weights, dtype=np.float64),
        )
    return _kernels_numpy.resample_axis0(image, indices, weights)
