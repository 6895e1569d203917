import numpy as np
import pytest
import torch
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def toy_small():
    """Small toy dataset shared by fast unit tests."""
    from ganhash.data import make_toy_dataset

    return make_toy_dataset(4, 30, 8, "single", seed=101)


@pytest.fixture(scope="session")
def toy_split(toy_small):
    from ganhash.data import split_supervised

    return split_supervised(toy_small, 8, seed=5)


@pytest.fixture(scope="session")
def tiny_gan(toy_split):
    """A briefly pretrained GAN: enough structure for sampling tests."""
    from ganhash.gan import GanConfig, pretrain_gan

    labeled, unlabeled = toy_split
    cfg = GanConfig(image_size=8, class_count=4, iterations=30, batch_size=32,
                    gen_width=16, disc_width=16)
    return pretrain_gan(labeled, unlabeled, cfg, seed=3)


@pytest.fixture(scope="session")
def tiny_model():
    from ganhash.model import HashModelConfig, build_hash_model

    cfg = HashModelConfig(image_size=8, class_count=4, code_bits=12,
                          feature_dim=32, width=8)
    return build_hash_model(cfg, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _torch_single_default_dtype():
    # keep tests independent of any dtype leakage between cases
    torch.set_default_dtype(torch.float32)
    yield
