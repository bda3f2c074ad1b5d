"""Shared fixtures: one small trained checkpoint reused across suites."""

import pytest

from stylemap.editing import EditModel
from stylemap.training import train_loop

from util import tiny_config


@pytest.fixture(scope="session")
def toy_run_dir(tmp_path_factory):
    """A 16px model trained for a handful of steps; enough for contract
    tests that need a real checkpoint rather than a good one."""
    cfg = tiny_config(
        network=dict(
            image_size=16,
            stylemap_hw=(4, 4),
            stylemap_channels=4,
            latent_dim=8,
            mapping_layers=3,
            mapping_hidden=16,
            channel_base=256,
            channel_max=32,
        ),
        total_steps=60,
        batch_size=4,
        train_count=32,
    )
    out = tmp_path_factory.mktemp("toy_run")
    train_loop(cfg, str(out))
    return str(out)


@pytest.fixture(scope="session")
def toy_ckpt(toy_run_dir):
    import os

    return os.path.join(toy_run_dir, "last.ckpt")


@pytest.fixture(scope="session")
def toy_model(toy_ckpt):
    return EditModel.from_checkpoint(toy_ckpt)
