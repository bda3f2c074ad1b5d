"""Distribution and reconstruction metrics.

The Frechet distance between gaussian fits of two feature sets is

    ||mu_a - mu_b||^2 + tr(C_a + C_b - 2 (C_a C_b)^(1/2))

computed with an eigendecomposition-based matrix square root. The
interpolated-sample variant projects held-out images through the
encoder, blends random stylemap pairs with uniform coefficients,
synthesizes, and compares against training features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from stylemap import editing, losses


@dataclass
class FeatureSet:
    """Feature matrix (N, d) float64 plus the id of the extractor that made it."""

    features: np.ndarray
    extractor_id: str

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be (N, d), got {self.features.shape}")
        if self.features.shape[0] < 2:
            raise ValueError("need at least two samples to fit moments")


@dataclass
class EditRegionMse:
    """Pixel MSE of an edit against its two sources, split by mask region."""

    mse_src: float
    mse_ref: float
    src_empty: bool = False
    ref_empty: bool = False


def _psd_eigvals(mat: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with small negative eigenvalues clipped to zero.

    Eigenvalues below -tol (relative to the largest magnitude) indicate a
    genuinely non-PSD matrix and raise.
    """
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    floor = -tol * max(1.0, float(np.abs(vals).max()))
    if vals.min() < floor:
        raise ValueError(f"matrix is not PSD: min eigenvalue {vals.min():.3e}")
    return np.clip(vals, 0.0, None), vecs


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = _psd_eigvals(mat)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: FeatureSet, b: FeatureSet) -> float:
    if a.extractor_id != b.extractor_id:
        raise ValueError(f"feature sets from different extractors: {a.extractor_id!r} vs {b.extractor_id!r}")
    mu_a = a.features.mean(axis=0)
    mu_b = b.features.mean(axis=0)
    cov_a = np.cov(a.features, rowvar=False, ddof=1).reshape(mu_a.size, mu_a.size)
    cov_b = np.cov(b.features, rowvar=False, ddof=1).reshape(mu_b.size, mu_b.size)
    root_a = _sqrtm_psd(cov_a)
    inner, _ = _psd_eigvals(root_a @ cov_b @ root_a)
    tr_sqrt = float(np.sqrt(inner).sum())
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)


@torch.no_grad()
def compute_features(extractor, images: torch.Tensor, batch: int = 64) -> FeatureSet:
    feats = []
    for lo in range(0, images.shape[0], batch):
        feats.append(extractor.embed(images[lo : lo + batch]).to(torch.float64).numpy())
    return FeatureSet(np.concatenate(feats, axis=0), extractor.extractor_id)


@torch.no_grad()
def fid_between(extractor, images_a: torch.Tensor, images_b: torch.Tensor) -> float:
    return frechet_distance(
        compute_features(extractor, images_a), compute_features(extractor, images_b)
    )


@torch.no_grad()
def fid_lerp(
    model: editing.EditModel,
    test_images: torch.Tensor,
    train_features: FeatureSet,
    extractor,
    num_samples: int = 512,
    seed: int = 0,
    batch: int = 64,
    t_override: float | None = None,
) -> float:
    """Frechet distance of encoder-projected, pairwise-lerped samples.

    Projects the held-out set through the encoder, draws random index
    pairs and uniform blend coefficients, synthesizes the interpolated
    stylemaps and compares against the training feature set.
    """
    w = []
    for lo in range(0, test_images.shape[0], batch):
        w.append(model.encode(test_images[lo : lo + batch]))
    w = torch.cat(w)
    n = w.shape[0]
    rng = np.random.default_rng(seed)
    idx_a = rng.integers(0, n, num_samples)
    idx_b = rng.integers(0, n, num_samples)
    ts = np.full(num_samples, t_override) if t_override is not None else rng.uniform(0, 1, num_samples)
    feats = []
    for lo in range(0, num_samples, batch):
        a = w[idx_a[lo : lo + batch]]
        b = w[idx_b[lo : lo + batch]]
        t = torch.from_numpy(ts[lo : lo + batch]).to(a.dtype).view(-1, 1, 1, 1)
        x = model.decode((1 - t) * a + t * b)
        feats.append(extractor.embed(x).to(torch.float64).numpy())
    return frechet_distance(FeatureSet(np.concatenate(feats), extractor.extractor_id), train_features)


def mse_src_ref(
    output: torch.Tensor,
    original: torch.Tensor,
    reference: torch.Tensor,
    mask: torch.Tensor,
) -> EditRegionMse:
    """MSE outside the mask against the original, inside against the reference.

    An empty region reports 0 with its empty flag set.
    """
    editing.validate_mask(mask, output.shape[-1])
    m = mask.bool()
    src = ~m
    if output.shape != original.shape or output.shape != reference.shape:
        raise ValueError("output, original and reference must share a shape")

    def region_mse(target, region):
        if not region.any():
            return 0.0, True
        diff = (output - target)[..., region].square()
        return float(diff.mean()), False

    mse_s, empty_s = region_mse(original, src)
    mse_r, empty_r = region_mse(reference, m)
    return EditRegionMse(mse_s, mse_r, empty_s, empty_r)


@torch.no_grad()
def reconstruction_metrics(model: editing.EditModel, images: torch.Tensor, extractor, batch: int = 64):
    """Mean pixel MSE and perceptual distance of encoder round trips."""
    total_mse, total_perc, n = 0.0, 0.0, 0
    for lo in range(0, images.shape[0], batch):
        x = images[lo : lo + batch]
        x_hat = model.reconstruct(x)
        k = x.shape[0]
        total_mse += float(losses.image_recon_loss(x, x_hat)) * k
        total_perc += float(losses.perceptual_loss(x, x_hat, extractor)) * k
        n += k
    return {"mse": total_mse / n, "perceptual": total_perc / n}


def mask_iou(a: torch.Tensor, b: torch.Tensor) -> float:
    """Intersection over union; two empty masks count as identical."""
    a, b = a.bool(), b.bool()
    union = (a | b).sum().item()
    if union == 0:
        return 1.0
    return (a & b).sum().item() / union


def pair_by_mask_iou(masks: torch.Tensor) -> list[tuple[int, int]]:
    """Greedy max-IoU pairing; an odd element is left out."""
    n = masks.shape[0]
    scores = []
    for i in range(n):
        for j in range(i + 1, n):
            scores.append((mask_iou(masks[i], masks[j]), i, j))
    scores.sort(key=lambda s: (-s[0], s[1], s[2]))
    used, pairs = set(), []
    for _, i, j in scores:
        if i in used or j in used:
            continue
        pairs.append((i, j))
        used.update((i, j))
    return pairs


def half_and_half_masks(size: int, count: int) -> torch.Tensor:
    """Alternating vertical / horizontal half masks, the default edit protocol."""
    masks = torch.zeros(count, size, size)
    for i in range(count):
        if i % 2 == 0:
            masks[i, :, size // 2 :] = 1.0
        else:
            masks[i, size // 2 :, :] = 1.0
    return masks


@torch.no_grad()
def edit_mse_metrics(
    model: editing.EditModel,
    images: torch.Tensor,
    masks: torch.Tensor | None = None,
    space: str = "wplus",
):
    """Mean source/reference MSE over mask-paired local edits.

    With explicit semantic masks, images are paired greedily by mask IoU
    and each pair's masks are merged (union); otherwise alternating
    half-and-half masks pair consecutive images.
    """
    size = images.shape[-1]
    if masks is None:
        masks = half_and_half_masks(size, images.shape[0])
        pairs = [(i, i + 1) for i in range(0, images.shape[0] - 1, 2)]
        merged = {p: masks[p[0]] for p in pairs}
    else:
        pairs = pair_by_mask_iou(masks)
        merged = {p: ((masks[p[0]].bool() | masks[p[1]].bool()).float()) for p in pairs}
    if not pairs:
        raise ValueError("need at least two images to form an edit pair")
    src_total, ref_total, counted = 0.0, 0.0, 0
    skipped = 0
    for i, j in pairs:
        mask = merged[(i, j)]
        out = model.local_edit(images[i : i + 1], images[j : j + 1], mask, space=space)
        r = mse_src_ref(out[0], images[i], images[j], mask)
        if r.src_empty or r.ref_empty:
            skipped += 1
            continue
        src_total += r.mse_src
        ref_total += r.mse_ref
        counted += 1
    if counted == 0:
        return {"mse_src": 0.0, "mse_ref": 0.0, "pairs": 0, "skipped_empty": skipped}
    return {
        "mse_src": src_total / counted,
        "mse_ref": ref_total / counted,
        "pairs": counted,
        "skipped_empty": skipped,
    }
