import pytest
import torch

from src.models import build_model
from src.schemas.model.config import ConvSpec, ModelConfig, PoolSpec
from src.schemas.sparsity.groups import GroupPartition
from src.services.data import generate_synthetic


@pytest.fixture
def generator() -> torch.Generator:
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Small network for fast gradient and masking tests."""
    return ModelConfig(
        t=10,
        f=8,
        conv1=ConvSpec(m=3, r=3, channels=1, filters=4),
        pool=PoolSpec(p=2, q=2),
        conv2=ConvSpec(m=2, r=2, channels=4, filters=5),
        num_classes=3,
        seed=7,
    )


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config)


@pytest.fixture
def tiny_dataset():
    """3 classes x 20 examples matching tiny_config."""
    return generate_synthetic(num_classes=3, n_per_class=20, t=10, f=8, noise_sigma=0.3, seed=3)


@pytest.fixture
def toy_dataset():
    return generate_synthetic(num_classes=4, n_per_class=500, t=32, f=16, noise_sigma=0.5, seed=0)


@pytest.fixture
def row_partition() -> GroupPartition:
    """5 groups of dimension 4 (rows of a 5 x 4 matrix)."""
    return GroupPartition(target="w", shape=(5, 4), axis=0)
