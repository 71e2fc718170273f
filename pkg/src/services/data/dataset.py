from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import torch

from src.exceptions import DataConfigError

VALIDATION_FRACTION_DENOMINATOR = 5  # last 1/5 of every class


@dataclass(frozen=True)
class Dataset:
    """Labelled t x f spectrogram-like examples with a deterministic split.

    The validation split is the last 20 % (floor) of each class in storage
    order; the rest is training data.
    """

    features: torch.Tensor
    labels: torch.Tensor
    num_classes: int
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.features.dim() != 3 or self.labels.dim() != 1:
            raise DataConfigError("features must be (N, t, f) and labels (N,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataConfigError("feature and label counts differ")
        if self.labels.numel() and (int(self.labels.min()) < 0 or int(self.labels.max()) >= self.num_classes):
            raise DataConfigError(f"labels must lie in 0..{self.num_classes - 1}")

    @property
    def t(self) -> int:
        return self.features.shape[1]

    @property
    def f(self) -> int:
        return self.features.shape[2]

    def __len__(self) -> int:
        return self.labels.shape[0]

    @cached_property
    def _split(self) -> Tuple[torch.Tensor, torch.Tensor]:
        train, validation = [], []
        for k in range(self.num_classes):
            members = torch.nonzero(self.labels == k).flatten()
            n_val = members.numel() // VALIDATION_FRACTION_DENOMINATOR
            cut = members.numel() - n_val
            train.append(members[:cut])
            validation.append(members[cut:])
        return torch.cat(train).sort().values, torch.cat(validation).sort().values

    @property
    def train_indices(self) -> torch.Tensor:
        return self._split[0]

    @property
    def validation_indices(self) -> torch.Tensor:
        return self._split[1]

    def train(self) -> Tuple[torch.Tensor, torch.Tensor]:
        idx = self.train_indices
        return self.features[idx], self.labels[idx]

    def validation(self) -> Tuple[torch.Tensor, torch.Tensor]:
        idx = self.validation_indices
        return self.features[idx], self.labels[idx]
