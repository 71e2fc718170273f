"""
Factory module for building the training dataset from configuration settings.
"""

from typing import Optional

from src.config import DataSettings, get_settings

from .dataset import Dataset
from .features import load_features
from .synthetic import generate_synthetic


def make_dataset(settings: Optional[DataSettings] = None) -> Dataset:
    """
    Factory function to create the dataset described by the data settings.
    A configured feature file path takes precedence over synthetic generation.
    Returns:
        A Dataset with its deterministic train/validation split.
    """
    settings = settings or get_settings().data
    if settings.path:
        return load_features(settings.path)
    return generate_synthetic(
        num_classes=settings.num_classes,
        n_per_class=settings.n_per_class,
        t=settings.t,
        f=settings.f,
        noise_sigma=settings.noise_sigma,
        seed=settings.seed,
    )
