"""Configuration records for networks, training and data."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import yaml


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class NetworkConfig:
    """Static architecture description shared by all four networks.

    The stylemap is the intermediate latent with explicit spatial
    dimensions; the synthesis network doubles resolution from the
    stylemap size up to ``image_size``, consuming two modulated
    convolutions per resolution.
    """

    image_size: int = 32
    stylemap_hw: tuple[int, int] = (4, 4)
    stylemap_channels: int = 16
    latent_dim: int = 32
    mapping_layers: int = 8
    mapping_hidden: int = 64
    channel_base: int = 1024
    channel_max: int = 128
    resizer_channels: int | None = None
    lrelu_slope: float = 0.2
    # "scalar": one mean/std per sample over all entries (default).
    # "channel": per-channel statistics over the spatial axes.
    stat_mode: str = "scalar"
    # Momentum for the running normalization statistics that the
    # synthesis network freezes at inference time. Setting
    # eval_live_stats=True recomputes statistics from the activations
    # at inference as well, which sacrifices strict edit locality.
    stat_momentum: float = 0.1
    eval_live_stats: bool = False
    stat_eps: float = 1e-8

    def __post_init__(self):
        h, w = self.stylemap_hw
        self.stylemap_hw = (int(h), int(w))
        if h != w:
            raise ValueError(f"stylemap must be square, got {self.stylemap_hw}")
        if not _is_pow2(self.image_size) or not _is_pow2(h):
            raise ValueError("image_size and stylemap size must be powers of two")
        if h > self.image_size:
            raise ValueError("stylemap cannot be larger than the image")
        if self.stat_mode not in ("scalar", "channel"):
            raise ValueError(f"unknown stat_mode {self.stat_mode!r}")

    def channels(self, res: int) -> int:
        return min(self.channel_max, self.channel_base // res)

    @property
    def resolutions(self) -> list[int]:
        """All synthesis resolutions from the stylemap size up to the image."""
        out, r = [], self.stylemap_hw[0]
        while r <= self.image_size:
            out.append(r)
            r *= 2
        return out

    @property
    def level_resolutions(self) -> list[int]:
        """Spatial size of every stylemap pyramid level (two per resolution)."""
        return [r for r in self.resolutions for _ in range(2)]

    @property
    def num_levels(self) -> int:
        return len(self.level_resolutions)

    @property
    def resizer_width(self) -> int:
        return self.resizer_channels or self.stylemap_channels


def default_coefficients() -> dict[str, float]:
    return {
        "adv_d": 1.0,
        "adv_g": 1.0,
        "r1": 1.0,
        "domain_guided_d": 1.0,
        "domain_guided_eg": 1.0,
        "latent_recon": 1.0,
        "image_recon": 1.0,
        "perceptual": 1.0,
    }


@dataclass
class TrainConfig:
    lr: float = 0.002
    beta1: float = 0.0
    beta2: float = 0.99
    mapping_lr_mult: float = 0.01
    r1_gamma: float = 10.0
    r1_interval: int = 16
    batch_size: int = 16
    total_steps: int = 2000
    ema_decay: float = 0.999
    hflip_prob: float = 0.5
    seed: int = 0
    # "joint" trains F/G/E/D together; "sequential" spends the first
    # half of the budget on F/G/D only and the second half on E with
    # everything else frozen.
    mode: str = "joint"
    coefficients: dict[str, float] = field(default_factory=default_coefficients)
    perceptual_seed: int = 17
    checkpoint_every: int = 1000
    log_every: int = 100

    def __post_init__(self):
        if self.mode not in ("joint", "sequential"):
            raise ValueError(f"unknown training mode {self.mode!r}")
        coeffs = default_coefficients()
        coeffs.update(self.coefficients)
        unknown = set(self.coefficients) - set(default_coefficients())
        if unknown:
            raise ValueError(f"unknown loss coefficients {sorted(unknown)}")
        self.coefficients = coeffs
        if self.r1_interval < 1:
            raise ValueError("r1_interval must be >= 1")


@dataclass
class DataConfig:
    # "toy" generates the procedural scene dataset; "dir" reads PNG
    # files from <path>/train, <path>/val and <path>/test.
    source: str = "toy"
    path: str | None = None
    train_count: int = 1024
    val_count: int = 128
    test_count: int = 128
    seed: int = 7

    def __post_init__(self):
        if self.source not in ("toy", "dir"):
            raise ValueError(f"unknown data source {self.source!r}")
        if self.source == "dir" and not self.path:
            raise ValueError("source 'dir' requires a path")


@dataclass
class Config:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "Config":
        net = d.get("network", {})
        if "stylemap_hw" in net:
            net = dict(net, stylemap_hw=tuple(net["stylemap_hw"]))
        return Config(
            network=NetworkConfig(**net),
            train=TrainConfig(**d.get("train", {})),
            data=DataConfig(**d.get("data", {})),
        )

    def digest(self) -> str:
        """Stable hash of the full configuration, recorded in eval reports."""
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str) -> Config:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    return Config.from_dict(raw)


def save_config(cfg: Config, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)
