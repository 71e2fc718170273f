import logging

import torch

from src.exceptions import DataConfigError

from .dataset import Dataset

logger = logging.getLogger(__name__)


def generate_synthetic(
    num_classes: int, n_per_class: int, t: int, f: int, noise_sigma: float, seed: int
) -> Dataset:
    """Spectrogram-like classes separated by frequency band.

    Class k carries a unit-amplitude ridge over frequency band k (of K equal
    bands of width f // K) lasting t // 2 frames from a random onset, plus
    i.i.d. Gaussian noise of std ``noise_sigma``. Values are rounded to float32
    precision so the 32-bit feature file stores them exactly. Examples are
    stored class by class.

    Raises:
        DataConfigError: if K < 2, K > f, n_per_class < 1 or noise_sigma < 0.
    """
    if num_classes < 2:
        raise DataConfigError(f"need at least 2 classes, got {num_classes}")
    if num_classes > f:
        raise DataConfigError(f"{num_classes} classes do not fit into {f} frequency bins")
    if n_per_class < 1 or t < 1:
        raise DataConfigError("n_per_class and t must be positive")
    if noise_sigma < 0:
        raise DataConfigError(f"noise_sigma must be nonnegative, got {noise_sigma}")

    generator = torch.Generator().manual_seed(seed)
    count = num_classes * n_per_class
    labels = torch.arange(num_classes).repeat_interleave(n_per_class)

    band = f // num_classes
    ridge = max(1, t // 2)
    onsets = torch.randint(0, t - ridge + 1, (count,), generator=generator)
    frames = torch.arange(t)
    bins = torch.arange(f)
    in_time = (frames >= onsets[:, None]) & (frames < onsets[:, None] + ridge)
    in_band = (bins >= labels[:, None] * band) & (bins < (labels[:, None] + 1) * band)
    features = (in_time[:, :, None] & in_band[:, None, :]).to(torch.float64)

    noise = torch.randn((count, t, f), generator=generator, dtype=torch.float64)
    features = features + noise_sigma * noise
    features = features.to(torch.float32).to(torch.float64)

    logger.info(f"Generated {count} synthetic examples ({num_classes} classes, {t}x{f}, sigma={noise_sigma})")
    return Dataset(features=features, labels=labels, num_classes=num_classes, seed=seed)
