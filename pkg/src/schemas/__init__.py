from .model.config import ConvSpec, ModelConfig, PoolSpec
from .sparsity.groups import ChannelMask, GroupPartition
from .training.stage import EpochRow, Method, Penalty, StageConfig, StageReport, StageTag, SummaryRow

__all__ = [
    "ConvSpec",
    "ModelConfig",
    "PoolSpec",
    "ChannelMask",
    "GroupPartition",
    "EpochRow",
    "Method",
    "Penalty",
    "StageConfig",
    "StageReport",
    "StageTag",
    "SummaryRow",
]
