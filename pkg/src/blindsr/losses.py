"""Training objective: reconstruction + degradation-reconstruction +
degradation-consistency, weighted 1 / 10 / 1.

All squared-norm terms use mean-over-elements reduction so the weights are
independent of patch size and batch size. The consistency loss re-degrades
the HR batch with the *estimated* kernel and noise map, re-runs the extractor
on the simulated LR, and penalizes disagreement.
"""

import math
from dataclasses import dataclass

import torch

from .torch_ops import bicubic_downsample, blur_reflect


class NonFiniteLossError(RuntimeError):
    """Raised when a loss term turns NaN/inf; carries the offending term name."""

    def __init__(self, term: str, value: float):
        super().__init__(f"loss term {term!r} is non-finite ({value})")
        self.term = term


@dataclass
class LossWeights:
    re: float = 1.0
    dr: float = 10.0
    dc: float = 1.0
    # per-term consistency toggles (ablation rows: none / DR / +DC(LR) / +DC(KN))
    use_dc_lr: bool = True
    use_dc_kn: bool = True

    def __post_init__(self):
        if self.re < 0 or self.dr < 0 or self.dc < 0:
            raise ValueError("loss weights must be >= 0")

    @property
    def dc_active(self) -> bool:
        return self.dc > 0 and (self.use_dc_lr or self.use_dc_kn)


@dataclass
class LossBreakdown:
    """Scalar loss terms for logging; disabled terms are recorded as 0."""

    re: float = 0.0
    dr: float = 0.0
    dc_lr: float = 0.0
    dc_kernel: float = 0.0
    dc_noise: float = 0.0
    total: float = 0.0

    CSV_FIELDS = ("re", "dr", "dc_lr", "dc_noise", "dc_kernel", "total")


def reconstruction_loss(sr: torch.Tensor, hr: torch.Tensor) -> torch.Tensor:
    """Mean absolute error, normalized by C*H*W (and batch)."""
    if sr.shape != hr.shape:
        raise ValueError(f"shape mismatch {tuple(sr.shape)} vs {tuple(hr.shape)}")
    return (sr - hr).abs().mean()


def degradation_reconstruction_loss(
    n_est: torch.Tensor, k_est: torch.Tensor, n_gt: torch.Tensor, k_gt: torch.Tensor
) -> torch.Tensor:
    """Squared error on the noise map plus squared error on the blur kernel."""
    if n_est.shape != n_gt.shape:
        raise ValueError(f"noise map shape mismatch {tuple(n_est.shape)} vs {tuple(n_gt.shape)}")
    if k_est.shape != k_gt.shape:
        raise ValueError(f"kernel shape mismatch {tuple(k_est.shape)} vs {tuple(k_gt.shape)}")
    return (n_gt - n_est).pow(2).mean() + (k_gt - k_est).pow(2).mean()


def simulate_lr(hr: torch.Tensor, kernel: torch.Tensor, noise_map: torch.Tensor, s: int) -> torch.Tensor:
    """Differentiable degradation: (hr (*) kernel) down s + noise_map, pre-clamp."""
    return bicubic_downsample(blur_reflect(hr, kernel), s) + noise_map


def degradation_consistency_loss(
    hr: torch.Tensor,
    lr: torch.Tensor,
    k_est: torch.Tensor,
    n_est: torch.Tensor,
    extractor,
    s: int,
    detach_estimates: bool = False,
):
    """Consistency terms (dc_lr, dc_noise, dc_kernel).

    ``k_est``/``n_est`` are the extractor's estimates on ``lr``; ``lr`` should
    be the pre-clamp LR when the ground-truth pipeline produced it. With
    ``detach_estimates`` the (n_est, k_est) side of the noise/kernel terms is
    treated as a constant target (gradients flow fully by default).
    """
    if hr.shape[-2] != lr.shape[-2] * s or hr.shape[-1] != lr.shape[-1] * s:
        raise ValueError(
            f"HR {tuple(hr.shape)} is not {s}x the LR {tuple(lr.shape)} spatially"
        )
    lr_sim = simulate_lr(hr, k_est, n_est, s)
    dc_lr = (lr_sim - lr).pow(2).mean()
    n_sim, k_sim = extractor(lr_sim)
    n_ref = n_est.detach() if detach_estimates else n_est
    k_ref = k_est.detach() if detach_estimates else k_est
    dc_noise = (n_sim - n_ref).pow(2).mean()
    dc_kernel = (k_sim - k_ref).pow(2).mean()
    return dc_lr, dc_noise, dc_kernel


def _check_finite(name: str, value: torch.Tensor | float) -> None:
    v = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
    if not math.isfinite(v):
        raise NonFiniteLossError(name, v)


def overall_loss(re, dr, dc_lr, dc_noise, dc_kernel, weights: LossWeights):
    """Weighted sum of all active terms; raises NonFiniteLossError naming a bad term."""
    parts = {"re": re, "dr": dr, "dc_lr": dc_lr, "dc_noise": dc_noise, "dc_kernel": dc_kernel}
    for name, value in parts.items():
        _check_finite(name, value)
    dc_sum = 0.0
    if weights.use_dc_lr:
        dc_sum = dc_sum + dc_lr
    if weights.use_dc_kn:
        dc_sum = dc_sum + dc_kernel + dc_noise
    total = weights.re * re + weights.dr * dr + weights.dc * dc_sum
    _check_finite("total", total)
    return total
