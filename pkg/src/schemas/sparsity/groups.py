from typing import List, Tuple

import torch
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class GroupPartition(BaseModel):
    """Disjoint partition of a tensor's indices into the slices along one axis.

    Group g holds every index whose coordinate on ``axis`` equals g, so the
    channel grouping of a conv kernel (m, r, C, n) is ``axis=2`` with G = C
    and d = m * r * n.
    """

    model_config = ConfigDict(frozen=True)

    target: str = Field(..., description="Name of the grouped parameter tensor.")
    shape: Tuple[int, ...] = Field(..., description="Shape of the grouped tensor.")
    axis: int = Field(..., ge=0, description="Axis whose slices form the groups.")

    @field_validator("shape")
    @classmethod
    def validate_shape(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v or any(dim <= 0 for dim in v):
            raise ValueError(f"shape must have positive dimensions, got {v}")
        return v

    @model_validator(mode="after")
    def validate_axis(self) -> "GroupPartition":
        if self.axis >= len(self.shape):
            raise ValueError(f"axis {self.axis} out of range for shape {self.shape}")
        return self

    @property
    def num_groups(self) -> int:
        return self.shape[self.axis]

    @property
    def group_size(self) -> int:
        numel = 1
        for dim in self.shape:
            numel *= dim
        return numel // self.num_groups

    def index_sets(self) -> List[List[int]]:
        """Flat row-major indices I_g of every group."""
        flat = torch.arange(self.num_groups * self.group_size).reshape(self.shape)
        return flat.movedim(self.axis, 0).reshape(self.num_groups, -1).tolist()


class ChannelMask(BaseModel):
    """Frozen 0/1 pruning pattern over the second conv layer's channels."""

    model_config = ConfigDict(frozen=True)

    bits: Tuple[int, ...] = Field(..., description="1 keeps a channel, 0 prunes it.")

    @field_validator("bits")
    @classmethod
    def validate_bits(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v:
            raise ValueError("mask must cover at least one channel")
        if any(bit not in (0, 1) for bit in v):
            raise ValueError("mask bits must be 0 or 1")
        return v

    @classmethod
    def ones(cls, num_channels: int) -> "ChannelMask":
        return cls(bits=(1,) * num_channels)

    @classmethod
    def from_tensor(cls, keep: torch.Tensor) -> "ChannelMask":
        return cls(bits=tuple(int(bool(b)) for b in keep.tolist()))

    @property
    def num_channels(self) -> int:
        return len(self.bits)

    @property
    def num_pruned(self) -> int:
        return self.bits.count(0)

    @computed_field
    @property
    def sparsity(self) -> float:
        """Fraction of zero bits."""
        return self.num_pruned / self.num_channels

    def to_tensor(self, dtype: torch.dtype = torch.float64) -> torch.Tensor:
        return torch.tensor(self.bits, dtype=dtype)
