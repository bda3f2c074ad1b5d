"""Shared helpers and independent oracles for the test suite.

The oracles here are deliberately written against the documented
behaviour (support propagation, matrix square roots, finite
differences) rather than against the library code, so that tests catch
the library drifting from the contract instead of mirroring its bugs.
"""

from __future__ import annotations

import numpy as np
import torch

from stylemap.config import Config, NetworkConfig


def tiny_network(**kw) -> NetworkConfig:
    """An 8px model small enough for exhaustive checks."""
    base = dict(
        image_size=8,
        stylemap_hw=(2, 2),
        stylemap_channels=4,
        latent_dim=8,
        mapping_layers=2,
        mapping_hidden=8,
        channel_base=64,
        channel_max=16,
    )
    base.update(kw)
    return NetworkConfig(**base)


def tiny_config(**kw) -> Config:
    cfg = Config()
    cfg.network = tiny_network(**kw.pop("network", {}))
    cfg.train.batch_size = kw.pop("batch_size", 4)
    cfg.train.total_steps = kw.pop("total_steps", 4)
    cfg.train.log_every = 1
    cfg.train.checkpoint_every = 0
    cfg.data.train_count = kw.pop("train_count", 16)
    cfg.data.val_count = 4
    cfg.data.test_count = kw.pop("test_count", 8)
    for k, v in kw.items():
        setattr(cfg.train, k, v)
    return cfg


# ---------------------------------------------------------------------------
# finite differences

def finite_diff(fn, x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Central finite-difference gradient of scalar fn at x, in float64.

    fn must treat x as read-only and return a python float or 0-dim
    tensor; the perturbation is applied coordinate by coordinate.
    """
    x = x.detach().clone()
    assert x.dtype == torch.float64, "finite differences need float64"
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    gflat = grad.view(-1)
    def evaluate():
        val = fn(x)
        return float(val.detach() if isinstance(val, torch.Tensor) else val)

    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        f_plus = evaluate()
        flat[i] = orig - eps
        f_minus = evaluate()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


# ---------------------------------------------------------------------------
# receptive-cone oracle
#
# The rendered image depends on a stylemap cell only through a chain of
# pointwise injections, 3x3 convolutions and nearest upsamplings.  A 3x3
# convolution grows a support set by one cell in every direction
# (clipped at borders) and nearest upsampling doubles it, so the exact
# cone can be computed by walking the same schedule on boolean masks.

def dilate(mask: np.ndarray) -> np.ndarray:
    """Grow a boolean support set by one cell in all 8 directions."""
    h, w = mask.shape
    padded = np.pad(mask, 1)
    out = np.zeros_like(mask)
    for dr in range(3):
        for dc in range(3):
            out |= padded[dr:dr + h, dc:dc + w]
    return out


def up2(mask: np.ndarray) -> np.ndarray:
    return np.kron(mask, np.ones((2, 2), dtype=bool))


def resizer_level_supports(cells: np.ndarray, num_levels: int) -> list[np.ndarray]:
    """Support of each pyramid level when the given base cells change.

    Mirrors the resizer schedule: two 3x3 convolutions per resolution
    with a nearest upsampling before every resolution after the first,
    levels tapped at each convolution output.
    """
    supports = []
    s = cells.astype(bool).copy()
    for i in range(num_levels):
        if i % 2 == 0 and i > 0:
            s = up2(s)
        s = dilate(s)
        supports.append(s.copy())
    return supports


def image_cone(cells: np.ndarray, num_levels: int) -> np.ndarray:
    """Pixels that may change when the given stylemap cells change.

    Each level enters the renderer pointwise (its modulation parameters
    are 1x1 projections), then flows through the remaining 3x3
    convolutions and upsamplings of the synthesis trunk.  The final RGB
    projection is 1x1 and adds nothing.
    """
    level_supports = resizer_level_supports(cells, num_levels)
    num_blocks = num_levels // 2
    total = None
    for i, s in enumerate(level_supports):
        block, pos = divmod(i, 2)
        s = s.copy()
        if pos == 0:
            s = dilate(s)  # second convolution of the same block
        for _ in range(block + 1, num_blocks):
            s = dilate(dilate(up2(s)))
        total = s if total is None else (total | s)
    return total


# ---------------------------------------------------------------------------
# matrix square root by Denman-Beavers iteration

def sqrtm_db(a: np.ndarray, iters: int = 100, tol: float = 1e-14) -> np.ndarray:
    """Principal square root of an SPD matrix, independent of eigensolvers."""
    y = np.array(a, dtype=np.float64)
    z = np.eye(a.shape[0], dtype=np.float64)
    for _ in range(iters):
        y_next = 0.5 * (y + np.linalg.inv(z))
        z_next = 0.5 * (z + np.linalg.inv(y))
        delta = np.max(np.abs(y_next - y))
        y, z = y_next, z_next
        if delta < tol:
            break
    return y


# ---------------------------------------------------------------------------
# test fixtures

class NearestResizer(torch.nn.Module):
    """Identity resizer: every level is a nearest-upsampled copy of w.

    Used to check that cellwise blending before resizing agrees with
    per-level blending after it when nothing mixes cells.  Requires
    resizer_width == stylemap_channels.
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        assert cfg.resizer_width == cfg.stylemap_channels
        self.cfg = cfg

    def forward(self, w):
        levels = []
        x = w
        for i in range(self.cfg.num_levels):
            if i % 2 == 0 and i > 0:
                x = torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest")
            levels.append(x)
        return levels
