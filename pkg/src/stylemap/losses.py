"""Training objectives.

Six terms drive joint training: non-saturating adversarial loss with
lazy R1 regularization, a domain-guided pair that judges encoder
reconstructions adversarially, latent reconstruction on the sampled
branch, and pixel plus perceptual reconstruction on the real branch.
Every coefficient defaults to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from stylemap.config import default_coefficients


@dataclass
class LossBundle:
    """Per-step loss values (floats) and the coefficients that weighted them."""

    adv_d: float = 0.0
    adv_g: float = 0.0
    r1: float = 0.0
    domain_guided_d: float = 0.0
    domain_guided_eg: float = 0.0
    latent_recon: float = 0.0
    image_recon: float = 0.0
    perceptual: float = 0.0
    coefficients: dict[str, float] = field(default_factory=default_coefficients)

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in default_coefficients()}

    def finite(self) -> bool:
        import math

        return all(math.isfinite(v) for v in self.values().values())


def adv_g_loss(fake_logits):
    """Non-saturating generator loss: mean softplus(-D(fake))."""
    return F.softplus(-fake_logits).mean()


def adv_d_loss(real_logits, fake_logits):
    """Discriminator loss: mean softplus(-D(real)) + mean softplus(D(fake))."""
    return F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()


def r1_penalty(discriminator, real, gamma=10.0):
    """(gamma/2) * E[ ||grad_x D(x)||^2 ] on real images.

    Differentiable so it can be applied lazily with interval scaling.
    """
    x = real.detach().requires_grad_(True)
    logits = discriminator(x)
    (grad,) = torch.autograd.grad(logits.sum(), x, create_graph=True)
    return 0.5 * gamma * grad.flatten(1).square().sum(dim=1).mean()


def domain_guided_d_loss(discriminator, x_recon):
    """Discriminator side of the reconstruction-adversarial pair.

    The reconstruction is detached so nothing propagates to the
    encoder or generator.
    """
    return F.softplus(discriminator(x_recon.detach())).mean()


def domain_guided_eg_loss(discriminator, x_recon):
    """Encoder/generator side: fool the discriminator with reconstructions.

    Discriminator parameters are temporarily taken out of the graph so
    gradients reach only the networks that produced x_recon.
    """
    params = [p for p in discriminator.parameters() if p.requires_grad]
    for p in params:
        p.requires_grad_(False)
    try:
        loss = F.softplus(-discriminator(x_recon)).mean()
    finally:
        for p in params:
            p.requires_grad_(True)
    return loss


def latent_recon_loss(w, w_hat):
    """MSE between a known stylemap and the encoder's estimate of it."""
    return F.mse_loss(w_hat, w)


def image_recon_loss(x, x_hat):
    """Pixel MSE between a real image and its reconstruction."""
    return F.mse_loss(x_hat, x)


def perceptual_loss(x, x_hat, extractor):
    """Sum over scales of the mean squared distance between unit-normalized features."""
    total = 0.0
    for fa, fb in zip(extractor.features(x), extractor.features(x_hat)):
        na = F.normalize(fa, dim=1, eps=1e-10)
        nb = F.normalize(fb, dim=1, eps=1e-10)
        total = total + (na - nb).square().mean()
    return total
