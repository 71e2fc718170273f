"""Group partitions, group penalties and proximal operators."""

from .grouping import (
    channel_sparsity,
    extract_groups,
    group_l0_norm,
    group_lasso_norm,
    group_norms,
    scatter_groups,
    zero_groups,
)
from .prox import GROUP_PROX, BinaryWeights, binary_project, binary_project_masked, prox_gl, prox_gl0

__all__ = [
    "GROUP_PROX",
    "BinaryWeights",
    "binary_project",
    "binary_project_masked",
    "channel_sparsity",
    "extract_groups",
    "group_l0_norm",
    "group_lasso_norm",
    "group_norms",
    "prox_gl",
    "prox_gl0",
    "scatter_groups",
    "zero_groups",
]
