"""Closed-form proximal and projection operators.

Group operators act on the rows of ``extract_groups`` so any penalty that is
separable over groups plugs in through ``GROUP_PROX``.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import torch

from src.exceptions import DegenerateMaskError, DimensionError, NegativeThresholdError, PartitionMismatchError
from src.schemas.sparsity.groups import ChannelMask, GroupPartition
from src.schemas.training.stage import Penalty
from src.sparsity.grouping import extract_groups, scatter_groups


def prox_gl(w: torch.Tensor, part: GroupPartition, lam: float) -> torch.Tensor:
    """Group soft-thresholding: w_g * max(||w_g|| - lam, 0) / ||w_g||.

    Groups with ||w_g|| <= lam come out exactly zero; lam = 0 is the identity.
    """
    if lam < 0:
        raise NegativeThresholdError(f"lambda must be nonnegative, got {lam}")
    groups = extract_groups(w, part)
    norms = groups.pow(2).sum(dim=1).sqrt()
    keep = norms > lam
    safe_norms = torch.where(keep, norms, torch.ones_like(norms))
    scale = torch.where(keep, (norms - lam) / safe_norms, torch.zeros_like(norms))
    return scatter_groups(groups * scale.unsqueeze(1), part)


def prox_gl0(w: torch.Tensor, part: GroupPartition, lam: float) -> torch.Tensor:
    """Group hard-thresholding: keep w_g verbatim iff ||w_g|| > sqrt(2 lam)."""
    if lam < 0:
        raise NegativeThresholdError(f"lambda must be nonnegative, got {lam}")
    groups = extract_groups(w, part)
    norms = groups.pow(2).sum(dim=1).sqrt()
    keep = (norms > (2.0 * lam) ** 0.5).to(groups.dtype)
    return scatter_groups(groups * keep.unsqueeze(1), part)


GroupProx = Callable[[torch.Tensor, GroupPartition, float], torch.Tensor]

GROUP_PROX: Dict[Penalty, GroupProx] = {
    Penalty.GL: prox_gl,
    Penalty.GL0: prox_gl0,
}


@dataclass(frozen=True)
class BinaryWeights:
    """scale * signs, with zeros wherever ``keep`` is 0."""

    scale: float
    signs: torch.Tensor
    keep: Optional[torch.Tensor] = None

    def reconstruct(self) -> torch.Tensor:
        weights = self.scale * self.signs
        if self.keep is not None:
            weights = weights * self.keep
        return weights


def _signs(w: torch.Tensor) -> torch.Tensor:
    # sgn(0) = +1
    return torch.where(w >= 0, torch.ones_like(w), -torch.ones_like(w))


def binary_project(w: torch.Tensor) -> BinaryWeights:
    """Closest point of R_+ x {-1, +1}^D: mean(|w|) * sgn(w)."""
    if w.numel() == 0:
        raise DimensionError("cannot binarize an empty tensor")
    return BinaryWeights(scale=float(w.abs().mean()), signs=_signs(w))


def binary_project_masked(w: torch.Tensor, mask: ChannelMask, part: GroupPartition) -> BinaryWeights:
    """binary_project restricted to the groups the mask keeps.

    The scale is the mean |w_j| over kept coordinates only and masked
    coordinates reconstruct to exactly 0.
    """
    if mask.num_channels != part.num_groups:
        raise PartitionMismatchError(
            f"mask covers {mask.num_channels} channels, partition has {part.num_groups} groups"
        )
    if mask.num_pruned == mask.num_channels:
        raise DegenerateMaskError("every channel is masked; nothing left to binarize")
    keep_rows = mask.to_tensor(w.dtype).unsqueeze(1).expand(part.num_groups, part.group_size)
    keep = scatter_groups(keep_rows, part)
    kept = keep.sum()
    scale = float((w.abs() * keep).sum() / kept)
    return BinaryWeights(scale=scale, signs=_signs(w), keep=keep)
