"""Y-channel PSNR/SSIM metrics, benchmark grids and the degradation window.

Metrics follow the SR-benchmark convention: BT.601 limited-range luma
(Y in [16, 235] on the 8-bit scale), a border crop of ``scale`` pixels, and
single-scale SSIM with an 11x11 Gaussian window averaged over the valid
region. Benchmark degradations are seeded per (dataset, cell, image) so
reports are bit-reproducible.
"""

import datetime
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .degradation import DegradationSpec, bicubic_upsample, degrade

Y_COEFFS = (65.481, 128.553, 24.966)
Y_OFFSET = 16.0

SRFunction = Callable[[np.ndarray, int], np.ndarray]  # (lr HWC, scale) -> sr HWC


def rgb_to_y(image: np.ndarray) -> np.ndarray:
    """BT.601 limited-range luma of an RGB [0,1] image, on the 0-255 scale."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected HWC RGB image, got shape {image.shape}")
    r, g, b = image[:, :, 0], image[:, :, 1], image[:, :, 2]
    return (Y_OFFSET + Y_COEFFS[0] * r + Y_COEFFS[1] * g + Y_COEFFS[2] * b).astype(np.float64)


def _crop(y: np.ndarray, border: int) -> np.ndarray:
    if border == 0:
        return y
    if 2 * border >= min(y.shape[:2]):
        raise ValueError(f"crop {border} leaves no pixels on {y.shape[:2]}")
    return y[border:-border, border:-border]


def psnr_y(a: np.ndarray, b: np.ndarray, crop: int = 0) -> float:
    """PSNR in dB over the luma planes (255 peak); inf for identical inputs."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ya = _crop(rgb_to_y(a), crop)
    yb = _crop(rgb_to_y(b), crop)
    mse = float(np.mean((ya - yb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _ssim_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation, valid region only
    taps = g.shape[0]
    h, w = img.shape
    rows = np.zeros((h - taps + 1, w), dtype=np.float64)
    for t in range(taps):
        rows += g[t] * img[t : t + h - taps + 1, :]
    out = np.zeros((h - taps + 1, w - taps + 1), dtype=np.float64)
    for t in range(taps):
        out += g[t] * rows[:, t : t + w - taps + 1]
    return out


def ssim_y(a: np.ndarray, b: np.ndarray, crop: int = 0) -> float:
    """Single-scale SSIM on luma: 11x11 Gaussian window (sigma 1.5), valid averaging."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    ya = _crop(rgb_to_y(a), crop)
    yb = _crop(rgb_to_y(b), crop)
    if min(ya.shape) < 11:
        raise ValueError(f"image too small for SSIM after crop: {ya.shape}")
    g = _ssim_window()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    mu1 = _filter_valid(ya, g)
    mu2 = _filter_valid(yb, g)
    var1 = _filter_valid(ya * ya, g) - mu1 ** 2
    var2 = _filter_valid(yb * yb, g) - mu2 ** 2
    cov = _filter_valid(ya * yb, g) - mu1 * mu2
    ssim_map = ((2 * mu1 * mu2 + c1) * (2 * cov + c2)) / (
        (mu1 ** 2 + mu2 ** 2 + c1) * (var1 + var2 + c2)
    )
    return float(ssim_map.mean())


def bicubic_baseline(lr: np.ndarray, scale: int) -> np.ndarray:
    """The do-nothing SR model: plain cubic upsampling of the LR input."""
    return bicubic_upsample(lr, scale)


@dataclass(frozen=True)
class BenchmarkGrid:
    scales: tuple[int, ...] = (2, 3, 4)
    kernel_widths: tuple[float, ...] = (0.2, 1.3, 2.6)
    noise_levels: tuple[float, ...] = (15.0, 50.0)

    @property
    def n_cells(self) -> int:
        return len(self.scales) * len(self.kernel_widths) * len(self.noise_levels)


@dataclass
class EvalCell:
    dataset: str
    scale: int
    sigma_k: float
    sigma_n: float
    psnr: float
    ssim: float
    n_images: int
    n_failed: int = 0


@dataclass
class EvalReport:
    cells: list[EvalCell] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def cell(self, dataset: str, scale: int, sigma_k: float, sigma_n: float) -> EvalCell:
        for c in self.cells:
            if (c.dataset, c.scale, c.sigma_k, c.sigma_n) == (dataset, scale, sigma_k, sigma_n):
                return c
        raise KeyError((dataset, scale, sigma_k, sigma_n))

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            for key, value in sorted(self.metadata.items()):
                writer.writerow([f"# {key}", value])
            writer.writerow(["dataset", "scale", "sigma_k", "sigma_n", "psnr", "ssim",
                            "n_images", "n_failed"])
            for c in self.cells:
                writer.writerow([c.dataset, c.scale, c.sigma_k, c.sigma_n,
                                 f"{c.psnr:.4f}", f"{c.ssim:.4f}", c.n_images, c.n_failed])

    def to_markdown(self, path=None) -> str:
        """One block per (sigma_k, sigma_n); columns are dataset x scale."""
        datasets = sorted({c.dataset for c in self.cells})
        scales = sorted({c.scale for c in self.cells})
        blocks = sorted({(c.sigma_k, c.sigma_n) for c in self.cells})
        lines = []
        for key, value in sorted(self.metadata.items()):
            lines.append(f"<!-- {key}: {value} -->")
        for sigma_k, sigma_n in blocks:
            lines.append("")
            lines.append(f"**[sigma_k={sigma_k}, sigma_n={sigma_n}]** (PSNR dB / SSIM)")
            header = ["degradation"] + [f"{d} x{s}" for d in datasets for s in scales]
            lines.append("| " + " | ".join(header) + " |")
            lines.append("|" + "---|" * len(header))
            row = [f"[{sigma_k}, {sigma_n}]"]
            for d in datasets:
                for s in scales:
                    try:
                        c = self.cell(d, s, sigma_k, sigma_n)
                        row.append(f"{c.psnr:.2f} / {c.ssim:.4f}")
                    except KeyError:
                        row.append("-")
            lines.append("| " + " | ".join(row) + " |")
        text = "\n".join(lines) + "\n"
        if path:
            Path(path).write_text(text)
        return text


def crop_to_multiple(image: np.ndarray, s: int) -> np.ndarray:
    h, w = image.shape[:2]
    return image[: h - h % s, : w - w % s]


def _cell_seed(base: int, d_idx: int, scale: int, k_idx: int, n_idx: int, img_idx: int) -> int:
    ss = np.random.SeedSequence([base, d_idx, scale, k_idx, n_idx, img_idx])
    return int(ss.generate_state(1, np.uint64)[0])


def run_benchmark(
    models: Mapping[int, SRFunction],
    datasets: Mapping[str, Sequence[np.ndarray]],
    grid: BenchmarkGrid = BenchmarkGrid(),
    seed: int = 0,
    kernel_size: int = 15,
    metadata: dict | None = None,
) -> EvalReport:
    """Degrade-infer-score every (dataset, scale, sigma_k, sigma_n) cell.

    ``models`` maps each grid scale to an SR callable; per-image failures are
    warned about and excluded from the averages (counted in the cell).
    """
    missing = [s for s in grid.scales if s not in models]
    if missing:
        raise ValueError(f"no model supplied for scale(s) {missing}")
    report = EvalReport(metadata={
        "border_crop": "scale",
        "date": datetime.date.today().isoformat(),
        "seed": seed,
        **(metadata or {}),
    })
    for d_idx, (name, images) in enumerate(sorted(datasets.items())):
        for scale in grid.scales:
            sr_fn = models[scale]
            for k_idx, sigma_k in enumerate(grid.kernel_widths):
                for n_idx, sigma_n in enumerate(grid.noise_levels):
                    psnrs, ssims, failed = [], [], 0
                    for img_idx, hr in enumerate(images):
                        try:
                            hr_c = crop_to_multiple(hr, scale)
                            spec = DegradationSpec(
                                kernel_width=sigma_k, noise_level=sigma_n, scale=scale,
                                seed=_cell_seed(seed, d_idx, scale, k_idx, n_idx, img_idx),
                                kernel_size=kernel_size,
                            )
                            sample = degrade(hr_c, spec)
                            sr = np.clip(sr_fn(sample.lr, scale), 0.0, 1.0)
                            p = psnr_y(sr, hr_c, crop=scale)
                            s = ssim_y(sr, hr_c, crop=scale)
                            psnrs.append(p)
                            ssims.append(s)
                        except Exception as err:  # noqa: BLE001 - per-image isolation
                            failed += 1
                            warnings.warn(
                                f"{name}[{img_idx}] x{scale} [{sigma_k},{sigma_n}] failed: {err}",
                                stacklevel=2,
                            )
                    report.cells.append(EvalCell(
                        dataset=name, scale=scale, sigma_k=sigma_k, sigma_n=sigma_n,
                        psnr=float(np.mean(psnrs)) if psnrs else float("nan"),
                        ssim=float(np.mean(ssims)) if ssims else float("nan"),
                        n_images=len(psnrs), n_failed=failed,
                    ))
    return report


WINDOW_NOISE_LEVELS = (0.0, 15.0, 30.0, 45.0, 60.0, 75.0)
WINDOW_KERNEL_WIDTHS = (0.2, 1.2, 2.1, 3.0)


def degradation_window(
    image: np.ndarray,
    scale: int,
    noise_levels: Sequence[float] = WINDOW_NOISE_LEVELS,
    kernel_widths: Sequence[float] = WINDOW_KERNEL_WIDTHS,
    seed: int = 0,
    kernel_size: int = 15,
) -> tuple[np.ndarray, list[dict]]:
    """Degrade one image under a (noise x width) grid of parameters.

    Returns the tiled LR mosaic (rows: noise levels, columns: kernel widths)
    and a manifest with one row per tile giving its parameters and placement.
    """
    hr = crop_to_multiple(image, scale)
    th, tw = hr.shape[0] // scale, hr.shape[1] // scale
    tiles = np.zeros((th * len(noise_levels), tw * len(kernel_widths), hr.shape[2]),
                     dtype=np.float32)
    manifest = []
    for i, sigma_n in enumerate(noise_levels):
        for j, sigma_k in enumerate(kernel_widths):
            spec = DegradationSpec(
                kernel_width=sigma_k, noise_level=sigma_n, scale=scale,
                seed=_cell_seed(seed, 0, scale, j, i, 0), kernel_size=kernel_size,
            )
            lr = degrade(hr, spec).lr
            tiles[i * th : (i + 1) * th, j * tw : (j + 1) * tw] = lr
            manifest.append({
                "row": i, "col": j, "sigma_n": sigma_n, "sigma_k": sigma_k,
                "x": j * tw, "y": i * th, "width": tw, "height": th,
            })
    return tiles, manifest
