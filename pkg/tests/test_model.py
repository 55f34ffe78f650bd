import numpy as np
import pytest
import torch

from blindsr import ModelConfig, build_kernel_pool, build_model, compute_pca, count_parameters
from blindsr.model import ChannelAttention, MetaDeblur, MetaDenoise, ResidualGroup
from blindsr.torch_ops import dynamic_conv, to_image, to_tensor
from helpers import tiny_model_config
from oracles import dynamic_conv_naive


@pytest.fixture(scope="module")
def tiny_net():
    return build_model(tiny_model_config(), seed=0)


def rand_lr(rng, h=12, w=12, n=2):
    return torch.from_numpy(rng.random((n, 3, h, w), dtype=np.float64).astype(np.float32))


class TestExtractor:
    def test_output_shapes(self):
        net = build_model(ModelConfig(channels=16, n_groups=1, n_rcab_per_group=1), seed=0)
        x = torch.rand(1, 3, 48, 48, generator=torch.Generator().manual_seed(0))
        est = net.extractor(x)
        assert est.noise_map.shape == (1, 3, 48, 48)
        assert est.kernel.shape == (1, 15, 15)

    def test_kernel_is_simplex_point(self, tiny_net):
        rng = np.random.default_rng(0)
        for _ in range(5):
            est = tiny_net.extractor(rand_lr(rng))
            sums = est.kernel.sum(dim=(1, 2))
            assert torch.all(est.kernel >= 0)
            assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)

    def test_deterministic(self, tiny_net):
        rng = np.random.default_rng(1)
        x = rand_lr(rng)
        a = tiny_net.extractor(x)
        b = tiny_net.extractor(x)
        assert torch.equal(a.noise_map, b.noise_map)
        assert torch.equal(a.kernel, b.kernel)

    def test_wrong_channels_rejected(self, tiny_net):
        with pytest.raises(ValueError):
            tiny_net.extractor(torch.rand(1, 4, 8, 8))


class TestMetaDenoise:
    def test_output_shape(self):
        mnm = MetaDenoise(channels=64)
        out = mnm(torch.rand(2, 3, 48, 48), torch.rand(2, 3, 48, 48))
        assert out.shape == (2, 64, 48, 48)

    def test_zero_map_ignores_noise_weights(self):
        # with a zero map and zero bias the output depends only on the LR channels
        torch.manual_seed(0)
        a = MetaDenoise(channels=8)
        b = MetaDenoise(channels=8)
        with torch.no_grad():
            b.conv.weight.copy_(a.conv.weight)
            b.conv.weight[:, 3:] = torch.rand_like(b.conv.weight[:, 3:])
            a.conv.bias.zero_()
            b.conv.bias.zero_()
        lr = torch.rand(1, 3, 10, 10)
        zeros = torch.zeros(1, 3, 10, 10)
        assert torch.equal(a(lr, zeros), b(lr, zeros))

    def test_locality(self):
        mnm = MetaDenoise(channels=8, kernel_size=3)
        lr = torch.rand(1, 3, 16, 16)
        noise = torch.zeros(1, 3, 16, 16)
        base = mnm(lr, noise)
        noise[0, 1, 8, 8] = 1.0
        changed = (mnm(lr, noise) - base).abs().sum(dim=1)[0] > 0
        ys, xs = torch.nonzero(changed, as_tuple=True)
        assert ys.min() >= 7 and ys.max() <= 9
        assert xs.min() >= 7 and xs.max() <= 9

    def test_scalar_broadcast_equals_constant_map(self):
        mnm = MetaDenoise(channels=8)
        lr = torch.rand(2, 3, 12, 12)
        sigma = torch.tensor([0.05, 0.11])
        const = sigma.view(2, 1, 1, 1).expand(2, 3, 12, 12)
        assert torch.equal(mnm(lr, sigma), mnm(lr, const))

    def test_shape_mismatch_rejected(self):
        mnm = MetaDenoise(channels=8)
        with pytest.raises(ValueError):
            mnm(torch.rand(1, 3, 8, 8), torch.rand(1, 3, 10, 10))


class TestBackbone:
    @pytest.mark.parametrize("scale", [2, 3, 4])
    @pytest.mark.parametrize("hw", [(17, 24), (16, 16)])
    def test_shape_contract(self, scale, hw):
        cfg = tiny_model_config(scale=scale)
        net = build_model(cfg, seed=0)
        h, w = hw
        sr, est = net(torch.rand(1, 3, h, w))
        assert sr.shape == (1, 3, scale * h, scale * w)
        assert est.noise_map.shape == (1, 3, h, w)

    def test_channel_attention_gate_in_unit_interval(self):
        ca = ChannelAttention(8, 4)
        x = torch.randn(2, 8, 6, 6) * 10
        pooled = x.mean(dim=(2, 3), keepdim=True)
        gate = torch.sigmoid(ca.expand(torch.relu(ca.squeeze(pooled))))
        assert torch.all(gate > 0) and torch.all(gate < 1)

    def test_zeroed_rcab_paths_leave_identity_plus_conv(self):
        group = ResidualGroup(8, 2, 4)
        with torch.no_grad():
            for block in group.blocks:
                block.conv2.weight.zero_()
                block.conv2.bias.zero_()
        x = torch.rand(1, 8, 10, 10)
        expected = x + group.conv(x)
        assert torch.allclose(group(x), expected, atol=0, rtol=0)


class TestDynamicConv:
    def test_delta_field_is_identity(self):
        x = torch.rand(2, 3, 9, 9)
        field = torch.zeros(2, 25, 9, 9)
        field[:, 12] = 1.0  # centre tap of a 5x5 kernel
        assert torch.equal(dynamic_conv(x, field), x)

    def test_uniform_field_is_box_filter(self):
        rng = np.random.default_rng(0)
        img = rng.random((10, 12, 3)).astype(np.float32)
        field = np.full((10, 12, 225), 1.0 / 225.0, np.float32)
        ours = dynamic_conv(to_tensor(img), torch.from_numpy(field.transpose(2, 0, 1))[None])
        assert np.abs(to_image(ours) - dynamic_conv_naive(img, field)).max() < 1e-6

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            h, w = rng.integers(4, 17, 2)
            k = int(rng.choice([3, 5, 7]))
            img = rng.random((h, w, 3)).astype(np.float32)
            field = (rng.random((h, w, k * k)).astype(np.float32) - 0.5) / (k * k)
            ours = dynamic_conv(to_tensor(img), torch.from_numpy(field.transpose(2, 0, 1))[None])
            assert np.abs(to_image(ours) - dynamic_conv_naive(img, field)).max() < 1e-6

    def test_linear_in_image(self):
        torch.manual_seed(0)
        x, y = torch.rand(1, 3, 8, 8), torch.rand(1, 3, 8, 8)
        field = torch.randn(1, 9, 8, 8) / 9.0
        lhs = dynamic_conv(2.0 * x - 0.3 * y, field)
        rhs = 2.0 * dynamic_conv(x, field) - 0.3 * dynamic_conv(y, field)
        assert (lhs - rhs).abs().max() < 1e-6

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            dynamic_conv(torch.rand(1, 3, 8, 8), torch.rand(1, 9, 6, 6))
        with pytest.raises(ValueError):
            dynamic_conv(torch.rand(1, 3, 8, 8), torch.rand(1, 10, 8, 8))


class TestMetaDeblur:
    def test_output_matches_coarse_shape(self, tiny_net):
        coarse = torch.rand(2, 3, 20, 20)
        kernel = torch.softmax(torch.rand(2, 25), dim=1)
        out = tiny_net.mbms[0](coarse, kernel)
        assert out.shape == coarse.shape

    def test_distinct_kernels_give_distinct_weight_fields(self, tiny_net):
        coarse = torch.rand(1, 3, 12, 12)
        k1 = torch.softmax(torch.rand(1, 25), dim=1)
        k2 = torch.softmax(torch.rand(1, 25) + 1.0, dim=1)
        f1 = tiny_net.mbms[0].weight_field(coarse, k1)
        f2 = tiny_net.mbms[0].weight_field(coarse, k2)
        assert (f1 - f2).abs().max() > 0

    def test_embedding_is_linear_no_renormalization(self, tiny_net):
        mbm = tiny_net.mbms[0]
        k = torch.rand(1, 25)
        assert torch.allclose(mbm.embed(3.0 * k), 3.0 * mbm.embed(k), atol=1e-6)

    def test_embedding_dim_mismatch_rejected(self, tiny_net):
        with pytest.raises(ValueError):
            tiny_net.mbms[0](torch.rand(1, 3, 8, 8), torch.rand(1, 30))

    def test_pca_initialized_embedding(self):
        pool = build_kernel_pool(100, (0.2, 3.0), seed=0, kernel_size=5)
        proj = compute_pca(pool, dim=15)
        net = build_model(tiny_model_config(), pca=proj, seed=0)
        for mbm in net.mbms:
            assert np.array_equal(mbm.embed.weight.detach().numpy(), proj.matrix)

    def test_pca_shape_mismatch_rejected(self):
        pool = build_kernel_pool(100, (0.2, 3.0), seed=0, kernel_size=15)
        proj = compute_pca(pool, dim=15)
        with pytest.raises(ValueError):
            build_model(tiny_model_config(blur_kernel_size=5), pca=proj, seed=0)


class TestFullForward:
    def test_x4_shape(self):
        net = build_model(tiny_model_config(scale=4), seed=0)
        sr, _ = net(torch.rand(1, 3, 48, 48))
        assert sr.shape == (1, 3, 192, 192)

    def test_deterministic_output(self):
        net = build_model(tiny_model_config(), seed=3)
        x = torch.rand(1, 3, 16, 16, generator=torch.Generator().manual_seed(1))
        a, _ = net(x)
        b, _ = net(x)
        assert torch.equal(a, b)

    def test_seeded_build_reproducible(self):
        a = build_model(tiny_model_config(), seed=5)
        b = build_model(tiny_model_config(), seed=5)
        for (pa, pb) in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_clamped_inference(self):
        net = build_model(tiny_model_config(), seed=0)
        sr, _ = net(torch.rand(1, 3, 12, 12), clamp=True)
        assert sr.min() >= 0.0 and sr.max() <= 1.0

    def test_noise_scalar_mode_matches_constant_map(self):
        cfg_map = tiny_model_config(mnm_mode="noise_map")
        cfg_scalar = tiny_model_config(mnm_mode="noise_scalar")
        net = build_model(cfg_scalar, seed=0)
        x = torch.rand(1, 3, 14, 14)
        est = net.extractor(x)
        sigma = net.noise_condition(est.noise_map)
        expected = sigma.view(-1, 1, 1, 1).expand_as(est.noise_map)
        assert torch.equal(net.mnm(x, sigma), net.mnm(x, expected))
        # the conditioning modes differ only in what the denoise head is fed
        net_map = build_model(cfg_map, seed=0)
        assert torch.equal(
            net_map.mnm(x, expected), net.mnm(x, expected)
        )

    def test_multiple_mbm(self):
        net = build_model(tiny_model_config(n_mbm=3), seed=0)
        assert len(net.mbms) == 3
        sr, _ = net(torch.rand(1, 3, 10, 10))
        assert sr.shape == (1, 3, 20, 20)

    def test_batched_forward_matches_per_sample(self):
        # per-sample estimated kernels: batching must not change semantics
        net = build_model(tiny_model_config(), seed=2)
        x = torch.rand(3, 3, 12, 12, generator=torch.Generator().manual_seed(4))
        batched, est = net(x)
        for i in range(3):
            single, est_i = net(x[i : i + 1])
            assert torch.allclose(batched[i], single[0], atol=1e-6)
            assert torch.allclose(est.kernel[i], est_i.kernel[0], atol=1e-7)


class TestParameterCounts:
    def test_single_conv_closed_form(self):
        conv = torch.nn.Conv2d(3, 64, 3)
        assert sum(p.numel() for p in conv.parameters()) == 3 * 64 * 9 + 64 == 1792

    def test_paper_scale_counts(self):
        counts = count_parameters(build_model(ModelConfig(), seed=0))
        assert abs(counts["extractor"] - 0.48e6) / 0.48e6 < 0.05
        assert abs(counts["sr_network"] - 7.89e6) / 7.89e6 < 0.05
        assert abs(counts["total"] - 8.37e6) / 8.37e6 < 0.05

    def test_component_sum(self, tiny_net):
        counts = count_parameters(tiny_net)
        assert counts["total"] == counts["extractor"] + counts["sr_network"]
        assert counts["sr_network"] == counts["mnm"] + counts["backbone"] + counts["mbm"]
        assert counts["total"] == sum(p.numel() for p in tiny_net.parameters())


class TestConvSizeSwitches:
    def test_mnm_1x1_switch(self):
        net = build_model(tiny_model_config(mnm_kernel_size=1), seed=0)
        assert net.mnm.conv.kernel_size == (1, 1)
        sr, _ = net(torch.rand(1, 3, 10, 10))
        assert sr.shape == (1, 3, 20, 20)

    def test_global_conv_size_flows_through(self):
        net = build_model(tiny_model_config(kernel_size=5), seed=0)
        assert net.extractor.conv_in.kernel_size == (5, 5)
        assert net.backbone.conv_out.kernel_size == (5, 5)
        assert net.mbms[0].conv_weights.kernel_size == (5, 5)
        sr, _ = net(torch.rand(1, 3, 10, 10))
        assert sr.shape == (1, 3, 20, 20)


class TestConfigValidation:
    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig(scale=5)
        with pytest.raises(ValueError):
            ModelConfig(blur_kernel_size=14)
        with pytest.raises(ValueError):
            ModelConfig(channels=8, ca_reduction=16)
        with pytest.raises(ValueError):
            ModelConfig(blur_kernel_size=3, embed_dim=15)
        with pytest.raises(ValueError):
            ModelConfig(mnm_mode="bogus")
