from decimal import ROUND_HALF_UP, Decimal
from typing import Optional, Union

import torch

from src.exceptions import PartitionMismatchError
from src.schemas.sparsity.groups import ChannelMask, GroupPartition


def _check(w: torch.Tensor, part: GroupPartition) -> None:
    if tuple(w.shape) != part.shape:
        raise PartitionMismatchError(
            f"partition for '{part.target}' expects shape {part.shape}, got {tuple(w.shape)}"
        )


def extract_groups(w: torch.Tensor, part: GroupPartition) -> torch.Tensor:
    """Rows of the returned (G, d) matrix are the group vectors w_g."""
    _check(w, part)
    return w.movedim(part.axis, 0).reshape(part.num_groups, part.group_size)


def scatter_groups(groups: torch.Tensor, part: GroupPartition) -> torch.Tensor:
    """Inverse of extract_groups."""
    if tuple(groups.shape) != (part.num_groups, part.group_size):
        raise PartitionMismatchError(
            f"expected ({part.num_groups}, {part.group_size}) group matrix, got {tuple(groups.shape)}"
        )
    moved = list(part.shape)
    moved.insert(0, moved.pop(part.axis))
    return groups.reshape(moved).movedim(0, part.axis).contiguous()


def group_norms(w: torch.Tensor, part: GroupPartition) -> torch.Tensor:
    """Euclidean norm of every group."""
    return extract_groups(w, part).pow(2).sum(dim=1).sqrt()


def group_lasso_norm(w: torch.Tensor, part: GroupPartition) -> float:
    """sum_g ||w_g||_2."""
    return float(group_norms(w, part).sum())


def group_l0_norm(w: torch.Tensor, part: GroupPartition) -> int:
    """Number of groups with nonzero Euclidean norm."""
    return int((group_norms(w, part) != 0).sum())


def zero_groups(w: torch.Tensor, part: GroupPartition, tol: float = 0.0) -> torch.Tensor:
    """Boolean vector over groups, True where ||w_g|| <= tol (exact zero by default)."""
    return group_norms(w, part) <= tol


def _percent(zeros: int, total: int) -> float:
    value = (Decimal(100 * zeros) / Decimal(total)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return float(value)


def channel_sparsity(
    w_or_mask: Union[torch.Tensor, ChannelMask],
    part: Optional[GroupPartition] = None,
    tol: float = 0.0,
) -> float:
    """Percentage of zero channels, rounded half-up to one decimal.

    Accepts either a frozen mask or a grouped weight tensor with its partition.
    """
    if isinstance(w_or_mask, ChannelMask):
        return _percent(w_or_mask.num_pruned, w_or_mask.num_channels)
    if part is None:
        raise PartitionMismatchError("a partition is required to measure sparsity of a tensor")
    zeros = int(zero_groups(w_or_mask, part, tol).sum())
    return _percent(zeros, part.num_groups)
