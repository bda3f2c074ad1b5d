"""Network building blocks: exact values, properties, and gradients."""

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings, strategies as st

from stylemap import nets
from stylemap.config import NetworkConfig

from util import (
    NearestResizer,
    finite_diff,
    image_cone,
    resizer_level_supports,
    tiny_network,
)

torch.manual_seed(0)

finite_floats = st.floats(
    min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False, width=32
)


# ---------------------------------------------------------------------------
# equalized learning rate

def test_equalized_scale_exact():
    assert nets.equalized_scale(4, math.sqrt(2)) == pytest.approx(math.sqrt(2) / 2, abs=0)
    assert nets.equalized_scale(1, 1.0) == 1.0
    assert nets.equalized_scale(9, 3.0) == 1.0


def test_equal_linear_output_std_monte_carlo():
    # unit-variance inputs through a fresh layer come out with std ~= gain
    torch.manual_seed(11)
    layer = nets.EqualLinear(512, 512, gain=math.sqrt(2))
    x = torch.randn(2048, 512)
    std = layer(x).std().item()
    assert abs(std - math.sqrt(2)) / math.sqrt(2) < 0.05


def test_equal_conv_output_std_monte_carlo():
    torch.manual_seed(12)
    conv = nets.EqualConv2d(32, 64, 3, gain=math.sqrt(2))
    x = torch.randn(16, 32, 16, 16)
    std = conv(x).std().item()
    assert abs(std - math.sqrt(2)) / math.sqrt(2) < 0.05


def test_equal_layers_apply_scale_at_runtime():
    # raw parameters stay unit-variance; the scale is applied in forward
    layer = nets.EqualLinear(16, 8, gain=math.sqrt(2))
    x = torch.randn(3, 16)
    expected = F.linear(x, layer.weight * nets.equalized_scale(16, math.sqrt(2)), layer.bias)
    assert torch.equal(layer(x), expected)


# ---------------------------------------------------------------------------
# modulation

def test_modulate_hand_case():
    # one sample, one channel: h = [[1,3],[5,7]], gamma=2, beta=1
    # mean 4, population variance 5 -> 2*(h-4)/sqrt(5) + 1
    h = torch.tensor([[[[1.0, 3.0], [5.0, 7.0]]]])
    out = nets.modulate(h, torch.tensor(2.0), torch.tensor(1.0))
    expected = 2.0 * (h - 4.0) / math.sqrt(5.0) + 1.0
    assert torch.allclose(out, expected, atol=1e-6)


def test_modulate_uses_population_variance():
    h = torch.tensor([[[[0.0, 2.0]]]])  # mean 1, population var 1 (sample var would be 2)
    out = nets.modulate(h, torch.tensor(1.0), torch.tensor(0.0))
    assert torch.allclose(out, torch.tensor([[[[-1.0, 1.0]]]]), atol=1e-4)


def test_modulate_eps_floors_constant_input():
    h = torch.full((2, 3, 4, 4), 5.0)
    out = nets.modulate(h, torch.tensor(1.0), torch.tensor(0.0), eps=1e-8)
    assert torch.isfinite(out).all()
    assert torch.allclose(out, torch.zeros_like(out))


def test_modulate_channel_mode_normalizes_per_channel():
    torch.manual_seed(3)
    h = torch.randn(4, 6, 8, 8) * 3 + 1
    out = nets.modulate(h, torch.tensor(1.0), torch.tensor(0.0), mode="channel")
    mu = out.mean(dim=(2, 3))
    sd = out.var(dim=(2, 3), unbiased=False).sqrt()
    assert torch.allclose(mu, torch.zeros_like(mu), atol=1e-5)
    assert torch.allclose(sd, torch.ones_like(sd), atol=1e-4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-3, 3), st.floats(0.1, 4))
def test_modulate_is_affine_in_gamma_beta(seed, beta, gamma):
    g = torch.Generator().manual_seed(seed)
    h = torch.randn(2, 3, 4, 4, generator=g)
    base = nets.modulate(h, torch.tensor(1.0), torch.tensor(0.0))
    out = nets.modulate(h, torch.tensor(gamma), torch.tensor(beta))
    assert torch.allclose(out, gamma * base + beta, atol=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_modulate_scalar_gives_zero_mean_unit_std_per_sample(seed):
    g = torch.Generator().manual_seed(seed)
    h = torch.randn(3, 2, 4, 4, generator=g) * 2 + 5
    out = nets.modulate(h, torch.tensor(1.0), torch.tensor(0.0))
    mu = out.mean(dim=(1, 2, 3))
    sd = out.var(dim=(1, 2, 3), unbiased=False).sqrt()
    assert torch.allclose(mu, torch.zeros_like(mu), atol=1e-5)
    assert torch.allclose(sd, torch.ones_like(sd), atol=1e-4)


def test_modulate_samples_are_independent():
    # per-sample statistics: a batch behaves like separate single samples
    torch.manual_seed(4)
    h = torch.randn(5, 3, 4, 4)
    joint = nets.modulate(h, torch.tensor(1.3), torch.tensor(-0.2))
    solo = torch.cat(
        [nets.modulate(h[i:i + 1], torch.tensor(1.3), torch.tensor(-0.2)) for i in range(5)]
    )
    assert torch.allclose(joint, solo, atol=1e-6)


def test_modulation_module_live_matches_functional():
    torch.manual_seed(5)
    mod = nets.Modulation2d(4, 6).eval()
    h = torch.randn(2, 6, 4, 4)
    style = torch.randn(2, 4, 4, 4)
    gamma = mod.to_gamma(style)
    beta = mod.to_beta(style)
    expected = nets.modulate(h, gamma, beta)
    assert torch.allclose(mod(h, style, live=True), expected, atol=1e-6)


def test_modulation_running_stats_update_only_in_training():
    torch.manual_seed(6)
    mod = nets.Modulation2d(4, 6)
    h = torch.randn(8, 6, 4, 4) * 2 + 3
    style = torch.randn(8, 4, 4, 4)

    mod.eval()
    mod(h, style, live=True)
    assert torch.equal(mod.running_mean, torch.zeros(1))
    assert torch.equal(mod.running_var, torch.ones(1))

    mod.train()
    mod(h, style, live=True)
    batch_mu = h.mean(dim=(1, 2, 3)).mean()
    batch_var = h.var(dim=(1, 2, 3), unbiased=False).mean()
    assert torch.allclose(mod.running_mean, 0.1 * batch_mu.view(1), atol=1e-5)
    assert torch.allclose(mod.running_var, 1.0 + 0.1 * (batch_var.view(1) - 1.0), atol=1e-5)


def test_modulation_frozen_stats_are_pointwise():
    # with live=False, changing one sample never touches another
    torch.manual_seed(7)
    mod = nets.Modulation2d(4, 6).eval()
    h = torch.randn(2, 6, 4, 4)
    style = torch.randn(2, 4, 4, 4)
    out = mod(h, style, live=False)
    h2 = h.clone()
    h2[1] += 100.0
    out2 = mod(h2, style, live=False)
    assert torch.equal(out[0], out2[0])
    assert not torch.equal(out[1], out2[1])


# ---------------------------------------------------------------------------
# mapping network

def test_mapping_shape_and_zero_weights():
    cfg = tiny_network()
    m = nets.MappingNetwork(cfg)
    z = torch.randn(3, cfg.latent_dim)
    w = m(z)
    assert w.shape == (3, cfg.stylemap_channels, *cfg.stylemap_hw)
    with torch.no_grad():
        for p in m.parameters():
            p.zero_()
    assert torch.equal(m(z), torch.zeros_like(w))


def test_mapping_rejects_bad_latents():
    m = nets.MappingNetwork(tiny_network())
    with pytest.raises(ValueError):
        m(torch.randn(3, 5))
    with pytest.raises(ValueError):
        m(torch.randn(8))


def test_mapping_is_deterministic():
    m = nets.MappingNetwork(tiny_network())
    z = torch.randn(2, 8)
    assert torch.equal(m(z), m(z))


# ---------------------------------------------------------------------------
# resizer

def test_resizer_level_shapes():
    cfg = tiny_network()  # resolutions 2, 4, 8
    r = nets.StylemapResizer(cfg)
    levels = r(torch.randn(3, cfg.stylemap_channels, *cfg.stylemap_hw))
    assert len(levels) == cfg.num_levels == 6
    sizes = [lvl.shape[-1] for lvl in levels]
    assert sizes == [2, 2, 4, 4, 8, 8]
    assert all(lvl.shape[1] == cfg.resizer_width for lvl in levels)
    # resolutions never shrink along the pyramid
    assert sizes == sorted(sizes)


def test_resizer_rejects_bad_stylemaps():
    r = nets.StylemapResizer(tiny_network())
    with pytest.raises(ValueError):
        r(torch.randn(2, 4, 3, 2))
    with pytest.raises(ValueError):
        r(torch.randn(2, 5, 2, 2))


def test_resizer_identity_conv_projects_level_zero():
    # effective-identity first convolution: level 0 reproduces w itself
    cfg = tiny_network()
    r = nets.StylemapResizer(cfg)
    conv = r.convs[0]
    with torch.no_grad():
        conv.weight.zero_()
        conv.bias.zero_()
        for o in range(cfg.stylemap_channels):
            conv.weight[o, o, 1, 1] = 1.0 / conv.scale
    w = torch.randn(2, cfg.stylemap_channels, *cfg.stylemap_hw)
    levels = r(w)
    assert torch.allclose(levels[0], w, atol=1e-6)


@torch.no_grad()
def test_resizer_supports_match_oracle():
    cfg = tiny_network(stylemap_hw=(4, 4), image_size=16, stylemap_channels=4)
    r = nets.StylemapResizer(cfg).eval()
    w = torch.randn(1, 4, 4, 4)
    w2 = w.clone()
    w2[0, :, 1, 2] += 1.0
    la, lb = r(w), r(w2)
    cells = np.zeros((4, 4), dtype=bool)
    cells[1, 2] = True
    for lvl_a, lvl_b, support in zip(la, lb, resizer_level_supports(cells, cfg.num_levels)):
        diff = (lvl_a - lvl_b).abs().sum(dim=1)[0].numpy()
        assert (diff[~support] == 0).all()
        assert diff[support].max() > 0


# ---------------------------------------------------------------------------
# synthesis

def test_synthesis_output_shape_and_determinism():
    cfg = tiny_network()
    g = nets.Generator(cfg).eval()
    w = torch.randn(2, cfg.stylemap_channels, *cfg.stylemap_hw)
    x = g(w)
    assert x.shape == (2, 3, 8, 8)
    assert torch.equal(x, g(w))


def test_synthesis_rejects_bad_pyramids():
    cfg = tiny_network()
    s = nets.SynthesisNetwork(cfg)
    r = nets.StylemapResizer(cfg)
    pyramid = r(torch.randn(1, cfg.stylemap_channels, *cfg.stylemap_hw))
    with pytest.raises(ValueError):
        s(pyramid[:-1])
    bad = [lvl.clone() for lvl in pyramid]
    bad[2] = torch.randn(1, cfg.resizer_width, 3, 3)
    with pytest.raises(ValueError):
        s(bad)


@torch.no_grad()
def test_edit_cone_matches_oracle():
    # frozen statistics: pixels outside the oracle cone are bit-identical
    torch.manual_seed(8)
    cfg = tiny_network(
        image_size=32, stylemap_hw=(8, 8), stylemap_channels=4, channel_base=128, channel_max=16
    )
    g = nets.Generator(cfg).eval()
    w = torch.randn(1, 4, 8, 8)
    for cells_idx in [(0, 0), (3, 4), (7, 7)]:
        w2 = w.clone()
        w2[0, :, cells_idx[0], cells_idx[1]] += 1.0
        xa = g.synthesize(g.resize(w), live=False)
        xb = g.synthesize(g.resize(w2), live=False)
        cells = np.zeros((8, 8), dtype=bool)
        cells[cells_idx] = True
        cone = image_cone(cells, cfg.num_levels)
        diff = (xa - xb).abs().sum(dim=1)[0].numpy()
        assert (diff[~cone] == 0).all(), f"leak outside cone for cell {cells_idx}"
        assert diff[cone].max() > 0


def test_corner_cell_cone_is_18px_at_this_scale():
    # documents the geometry the locality checks rely on
    cells = np.zeros((8, 8), dtype=bool)
    cells[0, 0] = True
    cone = image_cone(cells, 6)  # 8 -> 16 -> 32, two levels each
    assert cone.shape == (32, 32)
    assert cone[:18, :18].all()
    assert not cone[18:, :].any()
    assert not cone[:, 18:].any()


@torch.no_grad()
def test_live_stats_break_locality():
    # shows why frozen statistics matter: live normalization couples pixels
    torch.manual_seed(9)
    cfg = tiny_network(
        image_size=32, stylemap_hw=(8, 8), stylemap_channels=4, channel_base=128, channel_max=16
    )
    g = nets.Generator(cfg).eval()
    w = torch.randn(1, 4, 8, 8)
    w2 = w.clone()
    w2[0, :, 0, 0] += 3.0
    xa = g.synthesize(g.resize(w), live=True)
    xb = g.synthesize(g.resize(w2), live=True)
    diff = (xa - xb).abs().sum(dim=1)[0]
    assert diff[25:, 25:].max() > 0  # far corner moved anyway


# ---------------------------------------------------------------------------
# encoder / discriminator

def test_encoder_shape_and_validation():
    cfg = tiny_network()
    e = nets.Encoder(cfg)
    x = torch.randn(3, 3, 8, 8)
    w = e(x)
    assert w.shape == (3, cfg.stylemap_channels, *cfg.stylemap_hw)
    with pytest.raises(ValueError):
        e(torch.randn(3, 3, 16, 16))
    with pytest.raises(ValueError):
        e(torch.randn(3, 1, 8, 8))


def test_discriminator_scalar_logit():
    cfg = tiny_network()
    d = nets.Discriminator(cfg)
    assert d(torch.randn(5, 3, 8, 8)).shape == (5, 1)


def test_minibatch_stddev_constant_batch():
    x = torch.ones(4, 3, 4, 4) * 2.5
    y = nets.minibatch_stddev(x)
    assert y.shape == (4, 4, 4, 4)
    assert torch.equal(y[:, :3], x)
    assert torch.allclose(y[:, 3], torch.full((4, 4, 4), math.sqrt(1e-8)), atol=1e-6)


def test_minibatch_stddev_group_handling():
    for b in (1, 3, 6, 8):
        y = nets.minibatch_stddev(torch.randn(b, 2, 4, 4))
        assert y.shape == (b, 3, 4, 4)
        assert torch.isfinite(y).all()


def test_minibatch_stddev_hand_value():
    # two samples, one feature: std over the group is half their gap
    x = torch.zeros(2, 1, 1, 1)
    x[1] = 4.0
    y = nets.minibatch_stddev(x, group_size=2)
    assert torch.allclose(y[:, 1], torch.full((2, 1, 1), 2.0), atol=1e-4)


# ---------------------------------------------------------------------------
# truncation and averaging

def test_truncate_identity_and_mean():
    torch.manual_seed(10)
    w = torch.randn(3, 4, 2, 2)
    mean = torch.randn(4, 2, 2)
    assert torch.equal(nets.truncate(w, 1.0, mean), w) or torch.allclose(
        nets.truncate(w, 1.0, mean), w, atol=1e-6
    )
    out0 = nets.truncate(w, 0.0, mean)
    assert torch.allclose(out0, mean.expand_as(w), atol=1e-7)
    half = nets.truncate(w, 0.5, mean)
    assert torch.allclose(half, mean + 0.5 * (w - mean), atol=1e-7)


def test_mean_stylemap_seeded():
    m = nets.MappingNetwork(tiny_network())
    a = nets.mean_stylemap(m, num_samples=256, seed=3, batch_size=64)
    b = nets.mean_stylemap(m, num_samples=256, seed=3, batch_size=64)
    c = nets.mean_stylemap(m, num_samples=256, seed=4, batch_size=64)
    assert torch.equal(a, b)
    assert not torch.equal(a, c)
    assert a.shape == (4, 2, 2)


# ---------------------------------------------------------------------------
# EMA

def test_ema_update_rule():
    layer = nets.EqualLinear(4, 4)
    ema = nets.EmaTracker(layer, decay=0.9)
    before = [p.clone() for p in ema.module.parameters()]
    assert all(torch.equal(s, p) for s, p in zip(before, layer.parameters()))
    with torch.no_grad():
        for p in layer.parameters():
            p.add_(1.0)
    ema.update(layer)
    for s, old, live in zip(ema.module.parameters(), before, layer.parameters()):
        assert torch.allclose(s, 0.9 * old + 0.1 * live, atol=1e-6)
    assert not any(p.requires_grad for p in ema.module.parameters())


def test_ema_copies_buffers_exactly():
    cfg = tiny_network()
    g = nets.Generator(cfg).train()
    ema = nets.EmaTracker(g, decay=0.99)
    g(torch.randn(4, cfg.stylemap_channels, *cfg.stylemap_hw))  # updates running stats
    ema.update(g)
    for s, b in zip(ema.module.buffers(), g.buffers()):
        assert torch.equal(s, b)


# ---------------------------------------------------------------------------
# gradients (float64 against torch's own finite-difference checker and
# an independent central-difference oracle)

def test_gradcheck_modulate():
    h = torch.randn(2, 2, 3, 3, dtype=torch.float64, requires_grad=True)
    gamma = torch.randn(2, 2, 3, 3, dtype=torch.float64, requires_grad=True)
    beta = torch.randn(2, 2, 3, 3, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(
        lambda a, b, c: nets.modulate(a, b, c), (h, gamma, beta), eps=1e-6, atol=1e-8
    )
    assert torch.autograd.gradcheck(
        lambda a, b, c: nets.modulate(a, b, c, mode="channel"), (h, gamma, beta), eps=1e-6, atol=1e-8
    )


def test_gradcheck_equal_layers():
    lin = nets.EqualLinear(3, 2).double()
    x = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lin, (x,), eps=1e-6, atol=1e-8)
    conv = nets.EqualConv2d(2, 2, 3).double()
    xc = torch.randn(1, 2, 4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(conv, (xc,), eps=1e-6, atol=1e-8)


def test_gradcheck_minibatch_stddev():
    x = torch.randn(4, 2, 2, 2, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(
        lambda t: nets.minibatch_stddev(t, group_size=2), (x,), eps=1e-6, atol=1e-7
    )


def test_generator_gradient_matches_finite_differences():
    torch.manual_seed(13)
    cfg = tiny_network()
    g = nets.Generator(cfg).double().eval()
    target = torch.randn(1, 3, 8, 8, dtype=torch.float64)

    def loss_of(w):
        return ((g.synthesize(g.resize(w), live=False) - target) ** 2).mean()

    w = torch.randn(1, 4, 2, 2, dtype=torch.float64, requires_grad=True)
    loss_of(w).backward()
    fd = finite_diff(lambda t: loss_of(t).item(), w.detach(), eps=1e-6)
    assert torch.allclose(w.grad, fd, rtol=1e-3, atol=1e-9)
