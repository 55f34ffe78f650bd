"""Blind super-resolution toolkit: degradation synthesis, a degradation-guided
meta-restoration network, losses, training and evaluation."""

__version__ = "0.1.0"

from .degradation import (
    DegradationSpec,
    DegradedSample,
    add_awgn,
    bicubic_downsample,
    bicubic_upsample,
    blur,
    degrade,
    gaussian_kernel,
    sample_spec,
)
from .evaluation import (
    BenchmarkGrid,
    EvalReport,
    bicubic_baseline,
    degradation_window,
    psnr_y,
    rgb_to_y,
    run_benchmark,
    ssim_y,
)
from .kernel_space import KernelPool, PcaProjection, build_kernel_pool, compute_pca, project
from .losses import (
    LossBreakdown,
    LossWeights,
    degradation_consistency_loss,
    degradation_reconstruction_loss,
    overall_loss,
    reconstruction_loss,
)
from .model import BlindSRNet, ModelConfig, build_model, count_parameters, sr_function
from .training import (
    DegradationConfig,
    TrainConfig,
    TrainState,
    finetune_noise_free,
    init_train_state,
    load_checkpoint,
    lr_schedule,
    sample_batch,
    save_checkpoint,
    train,
    train_step,
)
