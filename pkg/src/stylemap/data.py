"""Image IO, the procedural toy dataset, and deterministic batching.

All images are PNG, decoded to float32 CHW tensors in [-1, 1].
Dataset directories follow the layout::

    <root>/train/*.png
    <root>/val/*.png
    <root>/test/*.png
    <root>/masks/<semantic>/*.png   (optional, grayscale)
"""

from __future__ import annotations

import io
import os

import numpy as np
import torch
from PIL import Image


def to_unit_range(arr: np.ndarray) -> torch.Tensor:
    """uint8 HWC -> float32 CHW in [-1, 1]."""
    t = torch.from_numpy(arr.astype(np.float32) / 127.5 - 1.0)
    return t.permute(2, 0, 1).contiguous()


def to_uint8(img: torch.Tensor) -> np.ndarray:
    """float32 CHW in [-1, 1] -> uint8 HWC, round-trip stable for 8-bit data."""
    arr = (img.detach().clamp(-1, 1).permute(1, 2, 0).numpy() + 1.0) * 127.5
    return np.rint(arr).clip(0, 255).astype(np.uint8)


def decode_image(data: bytes, size: int | None = None) -> torch.Tensor:
    img = Image.open(io.BytesIO(data))
    img.load()
    if img.mode != "RGB":
        raise ValueError(f"expected a 3-channel RGB image, got mode {img.mode!r}")
    if size is not None and img.size != (size, size):
        if img.width < size or img.height < size:
            raise ValueError(f"image {img.size} is smaller than the model size {size}")
        # Area averaging for downscale keeps statistics stable.
        img = img.resize((size, size), Image.BOX)
    return to_unit_range(np.asarray(img))


def load_image(path: str, size: int | None = None) -> torch.Tensor:
    with open(path, "rb") as fh:
        return decode_image(fh.read(), size)


def encode_image(img: torch.Tensor) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_image(path: str, img: torch.Tensor) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_image(img))


def decode_mask(data: bytes, size: int) -> torch.Tensor:
    """Grayscale PNG -> float {0,1} mask of shape (size, size).

    0 means keep the original, 255 means take the reference. RGB(A)
    encodings are accepted when all color channels agree; any value
    other than 0 or 255 is rejected.
    """
    img = Image.open(io.BytesIO(data))
    img.load()
    arr = np.asarray(img)
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            if not (arr[:, :, 3] == 255).all():
                raise ValueError("mask alpha channel must be fully opaque")
            arr = arr[:, :, :3]
        if arr.shape[2] == 3:
            if not ((arr[:, :, 0] == arr[:, :, 1]) & (arr[:, :, 1] == arr[:, :, 2])).all():
                raise ValueError("color mask channels disagree; expected grayscale values")
            arr = arr[:, :, 0]
        else:
            raise ValueError(f"unsupported mask shape {arr.shape}")
    if arr.shape != (size, size):
        raise ValueError(f"mask shape {arr.shape} does not match image size {size}")
    vals = np.unique(arr)
    if not np.isin(vals, (0, 255)).all():
        raise ValueError(f"mask must be binary 0/255, found values {vals[:8].tolist()}")
    return torch.from_numpy((arr == 255).astype(np.float32))


def load_mask(path: str, size: int) -> torch.Tensor:
    with open(path, "rb") as fh:
        return decode_mask(fh.read(), size)


def encode_mask(mask: torch.Tensor) -> bytes:
    arr = (mask.detach().numpy() > 0.5).astype(np.uint8) * 255
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def _hard_edge(signed_dist, size):
    # one-pixel linear ramp: crisp to look at, stable under resampling
    return np.clip(signed_dist * size + 0.5, 0.0, 1.0)


def toy_image(seed: int, index: int, size: int = 32) -> torch.Tensor:
    """One procedural sample: a hard two-tone horizon plus solid discs.

    Every edge is crisp (about one pixel), so blurred or ghosted renders
    sit visibly off the data manifold instead of passing as soft variants.
    Deterministic in (seed, index), so splits are just index ranges and
    streams can restart anywhere.
    """
    rng = np.random.default_rng([seed, index])
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    sky = rng.uniform(-0.9, 0.9, size=3)
    ground = rng.uniform(-0.9, 0.9, size=3)
    horizon = rng.uniform(0.3, 0.7)
    blend = _hard_edge(yy - horizon, size)
    img = sky[None, None, :] * (1 - blend[..., None]) + ground[None, None, :] * blend[..., None]
    for _ in range(rng.integers(1, 3)):
        color = rng.uniform(-1.0, 1.0, size=3)
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        radius = rng.uniform(0.1, 0.22)
        dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        disc = _hard_edge(radius - dist, size)
        img = img * (1 - disc[..., None]) + color[None, None, :] * disc[..., None]
    img = np.clip(img, -1.0, 1.0)
    return torch.from_numpy(img.astype(np.float32)).permute(2, 0, 1).contiguous()


class Dataset:
    """In-memory image collection with deterministic order."""

    def __init__(self, images: torch.Tensor):
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (N, 3, H, W) images, got {tuple(images.shape)}")
        self.images = images

    def __len__(self):
        return self.images.shape[0]

    def __getitem__(self, idx):
        return self.images[idx]


def toy_split(split: str, count: int, seed: int, size: int = 32) -> Dataset:
    """Procedural split; train/val/test occupy disjoint index ranges."""
    offsets = {"train": 0, "val": 1_000_000, "test": 2_000_000}
    if split not in offsets:
        raise ValueError(f"unknown split {split!r}")
    base = offsets[split]
    imgs = torch.stack([toy_image(seed, base + i, size) for i in range(count)])
    return Dataset(imgs)


def dir_split(root: str, split: str, size: int) -> Dataset:
    folder = os.path.join(root, split)
    names = sorted(n for n in os.listdir(folder) if n.lower().endswith(".png"))
    if not names:
        raise ValueError(f"no PNG files in {folder}")
    imgs = torch.stack([load_image(os.path.join(folder, n), size) for n in names])
    return Dataset(imgs)


def load_split(data_cfg, split: str, size: int) -> Dataset:
    if data_cfg.source == "toy":
        count = getattr(data_cfg, f"{split}_count")
        return toy_split(split, count, data_cfg.seed, size)
    return dir_split(data_cfg.path, split, size)


def batch_indices(n_items: int, batch_size: int, seed: int, step: int) -> np.ndarray:
    """Indices for one training step.

    Each epoch is an independent seeded permutation; every item appears
    exactly once per epoch (the final batch of an epoch may be short).
    Pure in (seed, step), which makes resumption trivial.
    """
    if n_items < 1 or batch_size < 1:
        raise ValueError("need at least one item and a positive batch size")
    per_epoch = (n_items + batch_size - 1) // batch_size
    epoch, slot = divmod(step, per_epoch)
    perm = np.random.default_rng([seed, epoch]).permutation(n_items)
    return perm[slot * batch_size : (slot + 1) * batch_size]


def fetch_batch(dataset: Dataset, batch_size: int, seed: int, step: int) -> torch.Tensor:
    return dataset.images[batch_indices(len(dataset), batch_size, seed, step)]
