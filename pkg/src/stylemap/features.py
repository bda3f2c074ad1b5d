"""Pluggable image feature extractors for perceptual loss and distribution metrics.

The default extractor is a frozen, seeded random convolution pyramid.
Random projections preserve distances well enough at this scale to
drive both losses and Frechet-style metrics, and they keep the package
free of any pretrained weights. Anything exposing the same protocol
(`features`, `embed`, `extractor_id`) can be swapped in.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


class FeatureExtractor:
    """Protocol: multi-scale feature maps plus a flat embedding per image."""

    extractor_id: str

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        raise NotImplementedError

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


class RandomConvFeatures(FeatureExtractor, nn.Module):
    """Frozen 3-scale conv pyramid with seeded N(0,1/fan_in) weights."""

    def __init__(self, seed: int = 17, widths=(16, 32, 64)):
        nn.Module.__init__(self)
        self.seed = seed
        self.widths = tuple(widths)
        self.extractor_id = f"randconv-{len(widths)}x-seed{seed}"
        gen = torch.Generator().manual_seed(seed)
        convs = []
        in_ch = 3
        for w in widths:
            weight = torch.randn(w, in_ch, 3, 3, generator=gen) / (in_ch * 9) ** 0.5
            convs.append(nn.Parameter(weight, requires_grad=False))
            in_ch = w
        self.weights = nn.ParameterList(convs)

    def features(self, x):
        out = []
        y = x
        for i, w in enumerate(self.weights):
            y = F.conv2d(y, w, padding=1)
            y = F.leaky_relu(y, 0.2)
            out.append(y)
            if i < len(self.weights) - 1:
                y = F.avg_pool2d(y, 2)
        return out

    def embed(self, x):
        """Concatenated spatial means of every scale: one vector per image."""
        parts = [f.mean(dim=(2, 3)) for f in self.features(x)]
        return torch.cat(parts, dim=1)

    @property
    def embed_dim(self):
        return sum(self.widths)
