"""PCA of the flattened blur-kernel space.

The top principal directions of a pool of random Gaussian kernels initialize
the kernel-embedding layer of the deblur module. PCA is uncentered (no mean
subtraction) so the projection composes as a single linear map.
"""

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .degradation import DEFAULT_KERNEL_SIZE, WIDTH_RANGE, gaussian_kernel

EMBED_DIM = 15


@dataclass(frozen=True)
class KernelPool:
    """count x size^2 matrix of flattened blur kernels (each row sums to 1)."""

    kernels: np.ndarray
    kernel_size: int

    @property
    def count(self) -> int:
        return self.kernels.shape[0]


@dataclass(frozen=True)
class PcaProjection:
    """Rows are orthonormal principal directions (descending eigenvalue).

    Eigenvalues are only known when the projection was computed in-process;
    a projection loaded from its container carries the matrix alone.
    """

    matrix: np.ndarray  # (dim, size^2) float32
    kernel_size: int
    eigenvalues: np.ndarray | None = None  # (dim,) float64, non-increasing
    explained_variance: float | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def sha256(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.matrix).tobytes()).hexdigest()


def projection_from_matrix(matrix: np.ndarray) -> PcaProjection:
    size = int(round(matrix.shape[1] ** 0.5))
    if size * size != matrix.shape[1]:
        raise ValueError(f"projection width {matrix.shape[1]} is not a square kernel size")
    return PcaProjection(matrix=matrix.astype(np.float32), kernel_size=size)


def build_kernel_pool(
    n: int,
    width_range: tuple[float, float] = WIDTH_RANGE,
    seed: int = 0,
    kernel_size: int = DEFAULT_KERNEL_SIZE,
) -> KernelPool:
    """n kernels with widths uniform in width_range, flattened row-wise."""
    if n < EMBED_DIM:
        raise ValueError(f"pool size {n} below embedding dimension {EMBED_DIM}")
    if width_range[0] <= 0 or width_range[0] > width_range[1]:
        raise ValueError(f"invalid width range {width_range}")
    rng = np.random.default_rng(seed)
    widths = rng.uniform(width_range[0], width_range[1], size=n)
    pool = np.empty((n, kernel_size * kernel_size), dtype=np.float64)
    for i, w in enumerate(widths):
        pool[i] = gaussian_kernel(w, kernel_size).ravel()
    return KernelPool(kernels=pool, kernel_size=kernel_size)


def compute_pca(pool: KernelPool, dim: int = EMBED_DIM) -> PcaProjection:
    """Top-dim eigenvectors of the uncentered second-moment matrix of the pool.

    Sign convention: the largest-magnitude entry of each row is positive, so
    checkpoints built from the same pool reproduce. If the pool has rank below
    dim the basis is padded with an orthonormal completion (with a warning).
    """
    if pool.count < dim:
        raise ValueError(f"pool count {pool.count} below requested dim {dim}")
    k2 = pool.kernels.shape[1]
    if dim > k2:
        raise ValueError(f"dim {dim} exceeds kernel dimensionality {k2}")
    second_moment = pool.kernels.T @ pool.kernels / pool.count
    eigvals, eigvecs = np.linalg.eigh(second_moment)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    basis = eigvecs[:, order[:dim]].T  # (dim, k2)

    tol = eigvals[0] * k2 * np.finfo(np.float64).eps
    rank = int(np.sum(eigvals > tol))
    if rank < dim:
        # eigh always returns a full orthonormal basis; directions past the
        # numerical rank are an (arbitrary but deterministic) completion
        warnings.warn(
            f"kernel pool has numerical rank {rank} < dim {dim}; "
            f"trailing directions are an orthonormal completion of the null space",
            stacklevel=2,
        )

    flip = np.sign(basis[np.arange(dim), np.argmax(np.abs(basis), axis=1)])
    basis = basis * flip[:, None]

    total = eigvals.sum()
    explained = float(eigvals[:dim].sum() / total) if total > 0 else 1.0
    return PcaProjection(
        matrix=basis.astype(np.float32),
        kernel_size=pool.kernel_size,
        eigenvalues=eigvals[:dim],
        explained_variance=explained,
    )


def project(kernel: np.ndarray, projection: PcaProjection) -> np.ndarray:
    """Project a (flattened) blur kernel onto the principal directions."""
    vec = np.asarray(kernel, dtype=np.float64).ravel()
    if vec.shape[0] != projection.matrix.shape[1]:
        raise ValueError(
            f"kernel has {vec.shape[0]} entries, projection expects {projection.matrix.shape[1]}"
        )
    return (projection.matrix.astype(np.float64) @ vec).astype(np.float32)
