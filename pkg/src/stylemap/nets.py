"""Networks: mapping, stylemap resizer, synthesis, encoder, discriminator.

All learned layers use runtime weight scaling (equalized learning rate):
parameters are kept unit-variance and multiplied by gain/sqrt(fan_in) in
the forward pass.
"""

from __future__ import annotations

import copy
import math

import torch
import torch.nn.functional as F
from torch import nn

from stylemap.config import NetworkConfig


def equalized_scale(fan_in: int, gain: float = 1.0) -> float:
    """Runtime multiplier for unit-variance weights."""
    return gain / math.sqrt(fan_in)


class EqualLinear(nn.Module):
    def __init__(self, in_dim, out_dim, gain=1.0, bias=True, bias_init=0.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_dim, in_dim))
        self.bias = nn.Parameter(torch.full((out_dim,), float(bias_init))) if bias else None
        self.scale = equalized_scale(in_dim, gain)

    def forward(self, x):
        return F.linear(x, self.weight * self.scale, self.bias)

    def __repr__(self):
        return f"EqualLinear({self.weight.shape[1]}, {self.weight.shape[0]})"


class EqualConv2d(nn.Module):
    def __init__(self, in_ch, out_ch, kernel, gain=1.0, bias=True, bias_init=0.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.full((out_ch,), float(bias_init))) if bias else None
        self.scale = equalized_scale(in_ch * kernel * kernel, gain)
        self.padding = kernel // 2

    def forward(self, x):
        return F.conv2d(x, self.weight * self.scale, self.bias, padding=self.padding)

    def __repr__(self):
        o, i, k, _ = self.weight.shape
        return f"EqualConv2d({i}, {o}, kernel={k})"


def modulate(h, gamma, beta, mode="scalar", eps=1e-8):
    """Normalize activations and apply elementwise scale and shift.

    h is NCHW. Statistics are computed per sample: in "scalar" mode one
    mean and one standard deviation over all entries of the sample, in
    "channel" mode per channel over the spatial axes. The standard
    deviation is floored as sqrt(var + eps).
    """
    dims = (1, 2, 3) if mode == "scalar" else (2, 3)
    mu = h.mean(dim=dims, keepdim=True)
    var = h.var(dim=dims, unbiased=False, keepdim=True)
    return gamma * (h - mu) / torch.sqrt(var + eps) + beta


class Modulation2d(nn.Module):
    """Spatially variant modulation driven by one pyramid level.

    Affine 1x1 convolutions read gamma and beta off the resized
    stylemap. During training the activations are normalized with their
    own per-sample statistics while running averages are accumulated;
    with live=False the running statistics are used instead, which keeps
    the operation strictly local for editing.
    """

    def __init__(self, style_ch, feat_ch, mode="scalar", momentum=0.1, eps=1e-8):
        super().__init__()
        self.to_gamma = EqualConv2d(style_ch, feat_ch, 1, gain=1.0, bias_init=1.0)
        self.to_beta = EqualConv2d(style_ch, feat_ch, 1, gain=1.0, bias_init=0.0)
        self.mode = mode
        self.momentum = momentum
        self.eps = eps
        stat_dim = 1 if mode == "scalar" else feat_ch
        self.register_buffer("running_mean", torch.zeros(stat_dim))
        self.register_buffer("running_var", torch.ones(stat_dim))

    def forward(self, h, style, live=True):
        gamma = self.to_gamma(style)
        beta = self.to_beta(style)
        if live:
            dims = (1, 2, 3) if self.mode == "scalar" else (2, 3)
            mu = h.mean(dim=dims, keepdim=True)
            var = h.var(dim=dims, unbiased=False, keepdim=True)
            if self.training:
                with torch.no_grad():
                    m = self.momentum
                    self.running_mean += m * (mu.mean(dim=0).flatten() - self.running_mean)
                    self.running_var += m * (var.mean(dim=0).flatten() - self.running_var)
        else:
            mu = self.running_mean.view(1, -1, 1, 1)
            var = self.running_var.view(1, -1, 1, 1)
        return gamma * (h - mu) / torch.sqrt(var + self.eps) + beta


class ConstantInput(nn.Module):
    def __init__(self, channels, size):
        super().__init__()
        self.value = nn.Parameter(torch.randn(1, channels, size, size))

    def forward(self, batch):
        return self.value.repeat(batch, 1, 1, 1)


class MappingNetwork(nn.Module):
    """MLP from the sampled latent to a stylemap with spatial dimensions."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        h, w = cfg.stylemap_hw
        out_dim = cfg.stylemap_channels * h * w
        dims = [cfg.latent_dim] + [cfg.mapping_hidden] * (cfg.mapping_layers - 1) + [out_dim]
        self.layers = nn.ModuleList(
            EqualLinear(dims[i], dims[i + 1], gain=math.sqrt(2) if i < cfg.mapping_layers - 1 else 1.0)
            for i in range(cfg.mapping_layers)
        )

    def forward(self, z):
        if z.ndim != 2 or z.shape[1] != self.cfg.latent_dim:
            raise ValueError(f"expected latents of shape (N, {self.cfg.latent_dim}), got {tuple(z.shape)}")
        x = z
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = F.leaky_relu(x, self.cfg.lrelu_slope)
        h, w = self.cfg.stylemap_hw
        return x.view(-1, self.cfg.stylemap_channels, h, w)


class StylemapResizer(nn.Module):
    """Expands one stylemap into per-layer resized stylemaps.

    Each resolution contributes two levels; upsampling is nearest
    neighbor followed by a 3x3 convolution. Levels are tapped before
    the activation, so a level is an affine function of the one below.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        width = cfg.resizer_width
        convs = []
        in_ch = cfg.stylemap_channels
        for _ in cfg.resolutions:
            convs.append(EqualConv2d(in_ch, width, 3, gain=math.sqrt(2)))
            convs.append(EqualConv2d(width, width, 3, gain=math.sqrt(2)))
            in_ch = width
        self.convs = nn.ModuleList(convs)

    def forward(self, w):
        h_s, w_s = self.cfg.stylemap_hw
        if w.ndim != 4 or w.shape[1:] != (self.cfg.stylemap_channels, h_s, w_s):
            raise ValueError(
                f"expected stylemap of shape (N, {self.cfg.stylemap_channels}, {h_s}, {w_s}),"
                f" got {tuple(w.shape)}"
            )
        levels = []
        x = w
        for i, conv in enumerate(self.convs):
            if i % 2 == 0 and i > 0:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            y = conv(x)
            levels.append(y)
            x = F.leaky_relu(y, self.cfg.lrelu_slope)
        return levels


class SynthesisNetwork(nn.Module):
    """Learned-constant trunk with two modulated convolutions per resolution."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        base = cfg.resolutions[0]
        self.const = ConstantInput(cfg.channels(base), base)
        width = cfg.resizer_width
        convs, mods = [], []
        in_ch = cfg.channels(base)
        for res in cfg.resolutions:
            out_ch = cfg.channels(res)
            for _ in range(2):
                convs.append(EqualConv2d(in_ch, out_ch, 3, gain=math.sqrt(2)))
                mods.append(Modulation2d(width, out_ch, cfg.stat_mode, cfg.stat_momentum, cfg.stat_eps))
                in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.mods = nn.ModuleList(mods)
        self.to_rgb = EqualConv2d(cfg.channels(cfg.image_size), 3, 1, gain=1.0)

    def _check_pyramid(self, pyramid):
        expect = self.cfg.level_resolutions
        if len(pyramid) != len(expect):
            raise ValueError(f"expected {len(expect)} pyramid levels, got {len(pyramid)}")
        width = self.cfg.resizer_width
        for i, (lvl, res) in enumerate(zip(pyramid, expect)):
            if lvl.shape[1:] != (width, res, res):
                raise ValueError(
                    f"pyramid level {i}: expected (N, {width}, {res}, {res}), got {tuple(lvl.shape)}"
                )

    def forward(self, pyramid, live=None):
        self._check_pyramid(pyramid)
        if live is None:
            live = self.training or self.cfg.eval_live_stats
        x = self.const(pyramid[0].shape[0])
        lvl = 0
        for i, (conv, mod) in enumerate(zip(self.convs, self.mods)):
            if i % 2 == 0 and i > 0:
                x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = conv(x)
            x = mod(x, pyramid[lvl], live=live)
            x = F.leaky_relu(x, self.cfg.lrelu_slope)
            lvl += 1
        return self.to_rgb(x)


class Generator(nn.Module):
    """Stylemap resizer plus synthesis network."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        self.resizer = StylemapResizer(cfg)
        self.synthesis = SynthesisNetwork(cfg)

    def resize(self, w):
        return self.resizer(w)

    def synthesize(self, pyramid, live=None):
        return self.synthesis(pyramid, live=live)

    def forward(self, w):
        return self.synthesize(self.resize(w))


class ResBlockDown(nn.Module):
    """Residual block halving the resolution, shared by encoder and discriminator."""

    def __init__(self, in_ch, out_ch, slope):
        super().__init__()
        self.conv1 = EqualConv2d(in_ch, in_ch, 3, gain=math.sqrt(2))
        self.conv2 = EqualConv2d(in_ch, out_ch, 3, gain=math.sqrt(2))
        self.skip = EqualConv2d(in_ch, out_ch, 1, gain=1.0, bias=False)
        self.slope = slope

    def forward(self, x):
        y = F.leaky_relu(self.conv1(x), self.slope)
        y = F.leaky_relu(self.conv2(y), self.slope)
        y = F.avg_pool2d(y, 2)
        s = F.avg_pool2d(self.skip(x), 2)
        return (y + s) / math.sqrt(2)


class Encoder(nn.Module):
    """Discriminator-style trunk projecting an image to a stylemap."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        self.from_rgb = EqualConv2d(3, cfg.channels(cfg.image_size), 1, gain=math.sqrt(2))
        blocks = []
        res = cfg.image_size
        base = cfg.stylemap_hw[0]
        while res > base:
            blocks.append(ResBlockDown(cfg.channels(res), cfg.channels(res // 2), cfg.lrelu_slope))
            res //= 2
        self.blocks = nn.ModuleList(blocks)
        self.project = EqualConv2d(cfg.channels(base), cfg.stylemap_channels, 3, gain=1.0)

    def forward(self, x):
        s = self.cfg.image_size
        if x.ndim != 4 or x.shape[1:] != (3, s, s):
            raise ValueError(f"expected images of shape (N, 3, {s}, {s}), got {tuple(x.shape)}")
        y = F.leaky_relu(self.from_rgb(x), self.cfg.lrelu_slope)
        for block in self.blocks:
            y = block(y)
        return self.project(y)


def minibatch_stddev(x, group_size=4, eps=1e-8):
    """Appends the cross-sample feature deviation as one extra channel."""
    b, _, h, w = x.shape
    g = min(group_size, b)
    while b % g:
        g -= 1
    y = x.view(g, b // g, -1)
    std = torch.sqrt(y.var(dim=0, unbiased=False) + eps)
    feat = std.mean(dim=1).view(1, b // g, 1, 1, 1)
    feat = feat.expand(g, b // g, 1, h, w).reshape(b, 1, h, w)
    return torch.cat([x, feat], dim=1)


class Discriminator(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        self.cfg = cfg
        self.from_rgb = EqualConv2d(3, cfg.channels(cfg.image_size), 1, gain=math.sqrt(2))
        blocks = []
        res = cfg.image_size
        while res > 4:
            blocks.append(ResBlockDown(cfg.channels(res), cfg.channels(res // 2), cfg.lrelu_slope))
            res //= 2
        self.blocks = nn.ModuleList(blocks)
        ch = cfg.channels(4)
        self.final_conv = EqualConv2d(ch + 1, ch, 3, gain=math.sqrt(2))
        self.fc1 = EqualLinear(ch * 16, ch, gain=math.sqrt(2))
        self.fc2 = EqualLinear(ch, 1, gain=1.0)

    def forward(self, x):
        y = F.leaky_relu(self.from_rgb(x), self.cfg.lrelu_slope)
        for block in self.blocks:
            y = block(y)
        y = minibatch_stddev(y)
        y = F.leaky_relu(self.final_conv(y), self.cfg.lrelu_slope)
        y = F.leaky_relu(self.fc1(y.flatten(1)), self.cfg.lrelu_slope)
        return self.fc2(y)


def truncate(w, psi, w_mean):
    """Pulls stylemaps toward their mean: w_mean + psi * (w - w_mean)."""
    return w_mean + psi * (w - w_mean)


@torch.no_grad()
def mean_stylemap(mapping: MappingNetwork, num_samples=10000, seed=0, batch_size=512):
    """Monte-Carlo estimate of the mean stylemap under z ~ N(0, I)."""
    gen = torch.Generator().manual_seed(seed)
    total = None
    done = 0
    while done < num_samples:
        n = min(batch_size, num_samples - done)
        z = torch.randn(n, mapping.cfg.latent_dim, generator=gen)
        w = mapping(z).sum(dim=0)
        total = w if total is None else total + w
        done += n
    return total / num_samples


class EmaTracker:
    """Exponential moving average of a module: shadow <- d*shadow + (1-d)*live."""

    def __init__(self, module: nn.Module, decay: float):
        self.decay = decay
        self.module = copy.deepcopy(module).eval()
        for p in self.module.parameters():
            p.requires_grad_(False)

    @torch.no_grad()
    def update(self, live: nn.Module):
        for s, p in zip(self.module.parameters(), live.parameters()):
            s.lerp_(p, 1.0 - self.decay)
        for s, b in zip(self.module.buffers(), live.buffers()):
            s.copy_(b)
