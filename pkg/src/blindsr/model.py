"""The blind SR network: degradation extractor, meta-restoration modules and
an RCAB backbone.

The extractor estimates a noise map and a blur kernel from the LR input. The
denoise head turns the noise map into per-position biases (concat + conv),
the deblur tail turns the kernel into per-pixel dynamic-convolution weights,
and a stack of residual channel-attention groups with pixel-shuffle
upsampling sits in between.
"""

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .kernel_space import PcaProjection
from .torch_ops import dynamic_conv


@dataclass
class ModelConfig:
    channels: int = 64
    n_groups: int = 5
    n_rcab_per_group: int = 20
    ca_reduction: int = 16
    kernel_size: int = 3
    blur_kernel_size: int = 15
    embed_dim: int = 15
    scale: int = 2
    n_mbm: int = 1
    mnm_mode: str = "noise_map"  # or "noise_scalar" for the sigma-broadcast ablation
    mnm_kernel_size: int = 3  # 1x1 variant available as a switch

    def __post_init__(self):
        if self.channels < self.ca_reduction:
            raise ValueError(f"channels {self.channels} < ca_reduction {self.ca_reduction}")
        if self.blur_kernel_size % 2 == 0:
            raise ValueError(f"blur_kernel_size must be odd, got {self.blur_kernel_size}")
        if self.scale not in (2, 3, 4):
            raise ValueError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.embed_dim > self.blur_kernel_size ** 2:
            raise ValueError("embed_dim exceeds flattened kernel dimensionality")
        if self.mnm_mode not in ("noise_map", "noise_scalar"):
            raise ValueError(f"unknown mnm_mode {self.mnm_mode!r}")
        if self.n_mbm < 1:
            raise ValueError("n_mbm must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


class ExtractorOutput(NamedTuple):
    noise_map: torch.Tensor  # (N, 3, H, W), signed
    kernel: torch.Tensor  # (N, k, k), softmax simplex


class ResBlock(nn.Module):
    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv2d(channels, channels, kernel_size, padding=pad)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size, padding=pad)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class DegradationExtractor(nn.Module):
    """Shared feature trunk with a noise-map branch and a blur-kernel branch.

    The kernel branch ends in global average pooling and a softmax so the
    estimate is nonnegative and sums to one (no value shift under blur).
    """

    def __init__(self, channels: int = 64, blur_kernel_size: int = 15, kernel_size: int = 3):
        super().__init__()
        self.blur_kernel_size = blur_kernel_size
        k2 = blur_kernel_size ** 2
        pad = kernel_size // 2
        self.conv_in = nn.Conv2d(3, channels, kernel_size, padding=pad)
        self.block1 = ResBlock(channels, kernel_size)
        self.block2 = ResBlock(channels, kernel_size)
        self.noise_head = nn.Conv2d(channels, 3, kernel_size, padding=pad)
        self.blur_conv1 = nn.Conv2d(channels, 2 * channels, kernel_size, padding=pad)
        self.blur_conv2 = nn.Conv2d(2 * channels, k2, kernel_size, padding=pad)

    def forward(self, lr: torch.Tensor) -> ExtractorOutput:
        if lr.dim() != 4 or lr.shape[1] != 3:
            raise ValueError(f"expected NCHW input with 3 channels, got {tuple(lr.shape)}")
        feat = self.block2(self.block1(F.relu(self.conv_in(lr))))
        noise = self.noise_head(feat)
        blur = F.relu(self.blur_conv2(F.relu(self.blur_conv1(feat))))
        blur = blur.mean(dim=(2, 3))
        kernel = F.softmax(blur, dim=1)
        k = self.blur_kernel_size
        return ExtractorOutput(noise, kernel.reshape(-1, k, k))


class MetaDenoise(nn.Module):
    """Concat the LR image with the estimated noise map and fuse with one conv,
    so the map acts as a per-position bias for the denoising path."""

    def __init__(self, channels: int = 64, kernel_size: int = 3):
        super().__init__()
        self.conv = nn.Conv2d(6, channels, kernel_size, padding=kernel_size // 2)

    def forward(self, lr: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        if noise.dim() == 1:  # per-sample scalar, broadcast to a constant map
            noise = noise.view(-1, 1, 1, 1).expand(-1, 3, lr.shape[2], lr.shape[3])
        if noise.shape[0] != lr.shape[0] or noise.shape[-2:] != lr.shape[-2:]:
            raise ValueError(
                f"noise map shape {tuple(noise.shape)} incompatible with LR {tuple(lr.shape)}"
            )
        return self.conv(torch.cat([lr, noise], dim=1))


class ChannelAttention(nn.Module):
    def __init__(self, channels: int, reduction: int):
        super().__init__()
        self.squeeze = nn.Conv2d(channels, channels // reduction, 1)
        self.expand = nn.Conv2d(channels // reduction, channels, 1)

    def forward(self, x):
        y = x.mean(dim=(2, 3), keepdim=True)
        y = torch.sigmoid(self.expand(F.relu(self.squeeze(y))))
        return x * y


class RCAB(nn.Module):
    """conv-ReLU-conv + channel attention on the residual path."""

    def __init__(self, channels: int, reduction: int, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv2d(channels, channels, kernel_size, padding=pad)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size, padding=pad)
        self.ca = ChannelAttention(channels, reduction)

    def forward(self, x):
        return x + self.ca(self.conv2(F.relu(self.conv1(x))))


class ResidualGroup(nn.Module):
    def __init__(self, channels: int, n_rcab: int, reduction: int, kernel_size: int = 3):
        super().__init__()
        self.blocks = nn.Sequential(
            *[RCAB(channels, reduction, kernel_size) for _ in range(n_rcab)]
        )
        self.conv = nn.Conv2d(channels, channels, kernel_size, padding=kernel_size // 2)

    def forward(self, x):
        return x + self.conv(self.blocks(x))


def _upsampler(channels: int, scale: int, kernel_size: int = 3) -> nn.Sequential:
    pad = kernel_size // 2
    layers: list[nn.Module] = []
    if scale in (2, 3):
        layers += [nn.Conv2d(channels, channels * scale ** 2, kernel_size, padding=pad),
                   nn.PixelShuffle(scale), nn.ReLU(inplace=True)]
    elif scale == 4:
        for _ in range(2):
            layers += [nn.Conv2d(channels, channels * 4, kernel_size, padding=pad),
                       nn.PixelShuffle(2), nn.ReLU(inplace=True)]
    else:
        raise ValueError(f"unsupported scale {scale}")
    return nn.Sequential(*layers)


class FeatureBackbone(nn.Module):
    """Residual groups with a long skip, then pixel-shuffle upsampling."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config.channels
        k = config.kernel_size
        self.conv_first = nn.Conv2d(c, c, k, padding=k // 2)
        self.groups = nn.Sequential(*[
            ResidualGroup(c, config.n_rcab_per_group, config.ca_reduction, k)
            for _ in range(config.n_groups)
        ])
        self.conv_trunk = nn.Conv2d(c, c, k, padding=k // 2)
        self.upsampler = _upsampler(c, config.scale, k)
        self.conv_out = nn.Conv2d(c, 3, k, padding=k // 2)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        x = self.conv_first(features)
        x = x + self.conv_trunk(self.groups(x))
        return self.conv_out(self.upsampler(x))


class MetaDeblur(nn.Module):
    """Predicts per-pixel dynamic-convolution kernels from the estimated blur kernel.

    The kernel vector is embedded by a bias-free linear layer (initialized
    with the PCA of the kernel space), stretched spatially, concatenated with
    the coarse SR image, and mapped to a k^2-channel weight field.
    """

    def __init__(self, blur_kernel_size: int = 15, embed_dim: int = 15, kernel_size: int = 3):
        super().__init__()
        k2 = blur_kernel_size ** 2
        pad = kernel_size // 2
        self.embed = nn.Linear(k2, embed_dim, bias=False)
        self.conv_weights = nn.Conv2d(3 + embed_dim, k2, kernel_size, padding=pad)
        self.conv_out = nn.Conv2d(3, 3, kernel_size, padding=pad)

    def weight_field(self, coarse: torch.Tensor, kernel_vec: torch.Tensor) -> torch.Tensor:
        n, _, h, w = coarse.shape
        code = self.embed(kernel_vec)  # (N, embed_dim)
        stretched = code[:, :, None, None].expand(-1, -1, h, w)
        return self.conv_weights(torch.cat([coarse, stretched], dim=1))

    def forward(self, coarse: torch.Tensor, kernel_vec: torch.Tensor) -> torch.Tensor:
        if kernel_vec.shape[-1] != self.embed.in_features:
            raise ValueError(
                f"kernel vector length {kernel_vec.shape[-1]} != {self.embed.in_features}"
            )
        field = self.weight_field(coarse, kernel_vec)
        return self.conv_out(dynamic_conv(coarse, field))


class BlindSRNet(nn.Module):
    """Full pipeline: extractor -> denoise head -> backbone -> deblur tail(s)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.extractor = DegradationExtractor(
            config.channels, config.blur_kernel_size, config.kernel_size
        )
        self.mnm = MetaDenoise(config.channels, config.mnm_kernel_size)
        self.backbone = FeatureBackbone(config)
        self.mbms = nn.ModuleList([
            MetaDeblur(config.blur_kernel_size, config.embed_dim, config.kernel_size)
            for _ in range(config.n_mbm)
        ])

    def noise_condition(self, noise_map: torch.Tensor) -> torch.Tensor:
        if self.config.mnm_mode == "noise_map":
            return noise_map
        # scalar mode: spatial RMS of the estimated map, broadcast by MetaDenoise
        return noise_map.pow(2).mean(dim=(1, 2, 3)).sqrt()

    def forward(self, lr: torch.Tensor, clamp: bool = False):
        est = self.extractor(lr)
        feat = self.mnm(lr, self.noise_condition(est.noise_map))
        x = self.backbone(feat)
        kernel_vec = est.kernel.flatten(1)
        for mbm in self.mbms:
            x = mbm(x, kernel_vec)
        if clamp:
            x = x.clamp(0.0, 1.0)
        return x, est


def _relu_followed(net: BlindSRNet) -> set[nn.Module]:
    """Convs whose output feeds a ReLU (possibly through a pixel shuffle)."""
    mods = {net.extractor.conv_in, net.extractor.blur_conv1, net.extractor.blur_conv2}
    for module in net.modules():
        if isinstance(module, (ResBlock, RCAB)):
            mods.add(module.conv1)
        elif isinstance(module, ChannelAttention):
            mods.add(module.squeeze)
    for layer in net.backbone.upsampler:
        if isinstance(layer, nn.Conv2d):
            mods.add(layer)
    return mods


def init_parameters(net: BlindSRNet, pca: PcaProjection | None = None, seed: int = 0) -> BlindSRNet:
    """Deterministic init: Kaiming fan-in normal for convs, zero biases, PCA embedding.

    The Kaiming gain is sqrt(2) before ReLUs and 1 on linear/sigmoid outputs.
    Two residual-path dampeners (x0.1) keep the initial forward near identity:
    the last conv of each RCAB and the weight-field predictor of the deblur
    module (its output enters a multiplicative dynamic-convolution layer).
    """
    gen = torch.Generator().manual_seed(seed)
    relu_mods = _relu_followed(net)
    for module in net.modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            fan_in = module.weight[0].numel()
            gain = math.sqrt(2.0) if module in relu_mods else 1.0
            with torch.no_grad():
                module.weight.normal_(0.0, gain / math.sqrt(fan_in), generator=gen)
                if module.bias is not None:
                    module.bias.zero_()
    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, RCAB):
                module.conv2.weight.mul_(0.1)
        for mbm in net.mbms:
            mbm.conv_weights.weight.mul_(0.1)
    if pca is not None:
        expected = (net.config.embed_dim, net.config.blur_kernel_size ** 2)
        if tuple(pca.matrix.shape) != expected:
            raise ValueError(f"PCA matrix shape {pca.matrix.shape} != expected {expected}")
        with torch.no_grad():
            for mbm in net.mbms:
                mbm.embed.weight.copy_(torch.from_numpy(pca.matrix))
    return net


def build_model(config: ModelConfig, pca: PcaProjection | None = None, seed: int = 0) -> BlindSRNet:
    net = BlindSRNet(config)
    return init_parameters(net, pca, seed)


def sr_function(net: BlindSRNet, device=None):
    """Wrap a network as an (lr HWC, scale) -> sr HWC callable for evaluation."""
    from .torch_ops import to_image, to_tensor

    net.eval()
    dev = device or next(net.parameters()).device

    def fn(lr, scale):
        if scale != net.config.scale:
            raise ValueError(f"model is x{net.config.scale}, requested x{scale}")
        with torch.no_grad():
            sr, _ = net(to_tensor(lr, device=dev), clamp=True)
        return to_image(sr)

    return fn


def count_parameters(net: BlindSRNet) -> dict[str, int]:
    """Learnable-scalar totals per component (the SR network is everything
    except the extractor)."""
    def n(m: nn.Module) -> int:
        return sum(p.numel() for p in m.parameters())

    counts = {
        "extractor": n(net.extractor),
        "mnm": n(net.mnm),
        "backbone": n(net.backbone),
        "mbm": sum(n(m) for m in net.mbms),
    }
    counts["sr_network"] = counts["mnm"] + counts["backbone"] + counts["mbm"]
    counts["total"] = counts["extractor"] + counts["sr_network"]
    return counts
