"""Local editing in stylemap space.

Edits happen either on the shared stylemap ("w") or per pyramid level
("wplus", the default, which localizes better). Masks follow one
convention everywhere: 1 takes the reference, 0 keeps the original.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from stylemap import training
from stylemap.nets import mean_stylemap, truncate


def validate_mask(mask: torch.Tensor, size: int | None = None) -> torch.Tensor:
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2D, got shape {tuple(mask.shape)}")
    if size is not None and mask.shape != (size, size):
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match expected {size}")
    if not ((mask == 0) | (mask == 1)).all():
        raise ValueError("mask must be binary with values in {0, 1}")
    return mask


def shrink_mask(mask: torch.Tensor, hw: tuple[int, int]) -> torch.Tensor:
    """Downscale a binary mask by non-overlapping max pooling.

    A coarse cell is set when any pixel it covers is set.
    """
    validate_mask(mask)
    h, w = hw
    mh, mw = mask.shape
    if mh % h or mw % w:
        raise ValueError(f"mask {mask.shape} is not divisible by target {hw}")
    if (mh, mw) == (h, w):
        return mask
    return F.max_pool2d(mask[None, None], (mh // h, mw // w))[0, 0]


def blend_w(w: torch.Tensor, w_ref: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Cellwise mix of two stylemaps: mask cells come from the reference."""
    if w.shape != w_ref.shape:
        raise ValueError(f"stylemap shapes differ: {tuple(w.shape)} vs {tuple(w_ref.shape)}")
    validate_mask(mask, w.shape[-1])
    m = mask.to(w.dtype)[None, None]
    return m * w_ref + (1 - m) * w


def blend_wplus(pyramid, pyramid_ref, mask: torch.Tensor):
    """Per-level blend; the image-resolution mask is shrunk to each level."""
    if len(pyramid) != len(pyramid_ref):
        raise ValueError("pyramids have different depths")
    out = []
    for a, b in zip(pyramid, pyramid_ref):
        if a.shape != b.shape:
            raise ValueError(f"pyramid level shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
        m = shrink_mask(mask, (a.shape[-2], a.shape[-1])).to(a.dtype)[None, None]
        out.append(m * b + (1 - m) * a)
    return out


def transplant(w: torch.Tensor, w_ref: torch.Tensor, src_box, dst_box) -> torch.Tensor:
    """Copies rectangular stylemap regions from the reference.

    Boxes are (top, left, height, width) in stylemap cells; pass lists
    of boxes to apply several moves at once. Later boxes overwrite
    earlier ones where they overlap.
    """
    if w.shape != w_ref.shape:
        raise ValueError(f"stylemap shapes differ: {tuple(w.shape)} vs {tuple(w_ref.shape)}")
    if src_box and isinstance(src_box[0], int):
        src_box, dst_box = [src_box], [dst_box]
    if len(src_box) != len(dst_box):
        raise ValueError("need one destination box per source box")
    H, W = w.shape[-2:]
    out = w.clone()
    for src, dst in zip(src_box, dst_box):
        st, sl, sh, sw = src
        dt, dl, dh, dw = dst
        if (sh, sw) != (dh, dw):
            raise ValueError(f"box sizes differ: {src} vs {dst}")
        if sh < 0 or sw < 0:
            raise ValueError(f"negative box size in {src}")
        for t, l, h_, w_ in (src, dst):
            if t < 0 or l < 0 or t + h_ > H or l + w_ > W:
                raise ValueError(f"box {(t, l, h_, w_)} out of bounds for {H}x{W} stylemap")
        if sh == 0 or sw == 0:
            continue
        out[..., dt : dt + dh, dl : dl + dw] = w_ref[..., st : st + sh, sl : sl + sw]
    return out


def interpolate(w_a: torch.Tensor, w_b: torch.Tensor, t: float) -> torch.Tensor:
    """Linear interpolation (1-t)*a + t*b."""
    if w_a.shape != w_b.shape:
        raise ValueError(f"stylemap shapes differ: {tuple(w_a.shape)} vs {tuple(w_b.shape)}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    return (1.0 - t) * w_a + t * w_b


def style_mix(pyramid, pyramid_ref, levels, mask: torch.Tensor | None = None):
    """Swap a set of pyramid levels to the reference, optionally only inside a mask.

    Coarse levels carry color and texture, fine levels carry structure;
    `structure_only_levels` gives the level set that transfers structure
    while keeping the original's first level.
    """
    n = len(pyramid)
    levels = set(levels)
    bad = [i for i in levels if not 0 <= i < n]
    if bad:
        raise ValueError(f"pyramid has {n} levels, invalid indices {sorted(bad)}")
    out = []
    for i, (a, b) in enumerate(zip(pyramid, pyramid_ref)):
        if i not in levels:
            out.append(a)
        elif mask is None:
            out.append(b)
        else:
            m = shrink_mask(mask, (a.shape[-2], a.shape[-1])).to(a.dtype)[None, None]
            out.append(m * b + (1 - m) * a)
    return out


def structure_only_levels(num_levels: int) -> set[int]:
    """Every level except the first: reference structure, original style base."""
    return set(range(1, num_levels))


def semantic_edit(
    w: torch.Tensor,
    direction: torch.Tensor,
    strength: float,
    region: torch.Tensor | None = None,
) -> torch.Tensor:
    """Moves stylemaps along a direction, optionally only in masked cells.

    The direction is (C,) (broadcast over cells) or (C, H, W); region is
    a binary mask at stylemap resolution. Strength is multiplied in as
    given; use `direction_scale` to express it in units of the mapped
    latent distribution's spread along the direction.
    """
    if direction.ndim == 1:
        direction = direction.view(-1, 1, 1).expand(w.shape[-3:])
    if direction.shape != w.shape[-3:]:
        raise ValueError(
            f"direction shape {tuple(direction.shape)} does not match stylemap {tuple(w.shape[-3:])}"
        )
    delta = strength * direction.to(w.dtype)
    if region is not None:
        validate_mask(region, w.shape[-1])
        delta = delta * region.to(w.dtype)[None]
    return w + delta


@torch.no_grad()
def direction_scale(mapping, direction: torch.Tensor, num_samples=10000, seed=0, batch=512) -> float:
    """Standard deviation of mapped latents projected on the direction.

    Estimated from num_samples draws of the mapping network; used to
    express semantic edit strengths in distribution units.
    """
    cfg = mapping.cfg
    if direction.ndim == 1:
        direction = direction.view(-1, 1, 1).expand(cfg.stylemap_channels, *cfg.stylemap_hw)
    v = direction.flatten().to(torch.float32)
    v = v / v.norm()
    gen = torch.Generator().manual_seed(seed)
    projections = []
    done = 0
    while done < num_samples:
        n = min(batch, num_samples - done)
        z = torch.randn(n, cfg.latent_dim, generator=gen)
        projections.append(mapping(z).flatten(1) @ v)
        done += n
    return float(torch.cat(projections).std())


def fit_semantic_direction(stylemaps: torch.Tensor, labels) -> torch.Tensor:
    """Unit-norm normal of a least-squares linear classifier over flat stylemaps.

    Labels are boolean or {0, 1}; both classes must be present.
    """
    import numpy as np

    X = stylemaps.detach().flatten(1).to(torch.float64).numpy()
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} stylemaps but {y.shape[0]} labels")
    classes = np.unique(y)
    if not np.isin(classes, (0.0, 1.0)).all() or len(classes) != 2:
        raise ValueError("labels must contain both classes 0 and 1")
    y = y * 2.0 - 1.0
    A = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1)
    beta, *_ = np.linalg.lstsq(A, y, rcond=None)
    v = beta[:-1]
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("degenerate direction: classifier normal is zero")
    v = (v / norm).astype(np.float32)
    return torch.from_numpy(v).view(stylemaps.shape[1:])


class EditModel:
    """EMA networks from a checkpoint, wrapped for inference-time editing."""

    def __init__(self, cfg, mapping, generator, encoder):
        self.cfg = cfg
        self.net = cfg.network
        self.mapping = mapping
        self.generator = generator
        self.encoder = encoder
        self._w_mean = None

    @staticmethod
    def from_checkpoint(path: str) -> "EditModel":
        return EditModel(*training.load_inference(path))

    @torch.no_grad()
    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    @torch.no_grad()
    def decode(self, w: torch.Tensor) -> torch.Tensor:
        return self.generator(w)

    @torch.no_grad()
    def decode_pyramid(self, pyramid) -> torch.Tensor:
        return self.generator.synthesize(pyramid)

    @torch.no_grad()
    def resize(self, w: torch.Tensor):
        return self.generator.resize(w)

    @torch.no_grad()
    def reconstruct(self, x: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(x))

    @torch.no_grad()
    def sample(self, z: torch.Tensor, psi: float = 1.0) -> torch.Tensor:
        w = self.mapping(z)
        if psi != 1.0:
            w = truncate(w, psi, self.mean_stylemap())
        return self.decode(w)

    def mean_stylemap(self, num_samples=10000, seed=0) -> torch.Tensor:
        if self._w_mean is None:
            self._w_mean = mean_stylemap(self.mapping, num_samples, seed)
        return self._w_mean

    @torch.no_grad()
    def local_edit(self, x, x_ref, mask, space="wplus") -> torch.Tensor:
        """Encode both images, blend latents under the mask, synthesize."""
        validate_mask(mask, self.net.image_size)
        w, w_ref = self.encode(x), self.encode(x_ref)
        if space == "w":
            coarse = shrink_mask(mask, self.net.stylemap_hw)
            pyr = self.resize(blend_w(w, w_ref, coarse))
        elif space == "wplus":
            pyr = blend_wplus(self.resize(w), self.resize(w_ref), mask)
        else:
            raise ValueError(f"unknown edit space {space!r}")
        return self.decode_pyramid(pyr)

    @torch.no_grad()
    def scaled_semantic_edit(self, w, direction, strength_sigma, region=None, seed=0):
        """Semantic edit with strength in multiples of the mapped spread."""
        sigma = direction_scale(self.mapping, direction, seed=seed)
        return semantic_edit(w, direction, strength_sigma * sigma, region)
