"""Spatial-latent GAN training, inversion and local editing toolkit."""

from stylemap.config import DataConfig, NetworkConfig, TrainConfig

__all__ = ["DataConfig", "NetworkConfig", "TrainConfig"]
__version__ = "0.1.0"
