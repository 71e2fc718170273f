from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import torch

from src.exceptions import DimensionError
from src.schemas.sparsity.groups import ChannelMask, GroupPartition
from src.schemas.training.stage import Penalty
from src.sparsity.prox import GROUP_PROX, binary_project, binary_project_masked

Params = Dict[str, torch.Tensor]


@dataclass(frozen=True)
class SplitState:
    """Optimizer state (w, u) of the relaxed splitting methods.

    ``u`` exists only for the tensors named in ``partitions``; every other
    tensor in ``w`` is updated by a plain gradient step.
    """

    w: Params
    u: Params
    partitions: Dict[str, GroupPartition]
    eta: float
    beta: float = 0.0
    lam: float = 0.0
    penalty: Penalty = Penalty.GL

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.beta < 0 or self.lam < 0:
            raise ValueError(f"beta and lambda must be nonnegative, got {self.beta}, {self.lam}")
        for name, u in self.u.items():
            if name not in self.partitions or u.shape != self.w[name].shape:
                raise DimensionError(f"auxiliary tensor '{name}' is not aligned with w")

    @classmethod
    def init(
        cls,
        w: Params,
        partitions: Dict[str, GroupPartition],
        eta: float,
        beta: float = 0.0,
        lam: float = 0.0,
        penalty: Penalty = Penalty.GL,
    ) -> "SplitState":
        """State with u = Prox(w) for every grouped tensor."""
        prox = GROUP_PROX[penalty]
        u = {name: prox(w[name], part, lam) for name, part in partitions.items()}
        return cls(w=dict(w), u=u, partitions=dict(partitions), eta=eta, beta=beta, lam=lam, penalty=penalty)

    def prox(self, name: str, tensor: torch.Tensor) -> torch.Tensor:
        return GROUP_PROX[self.penalty](tensor, self.partitions[name], self.lam)

    def refreshed(self) -> "SplitState":
        """Copy with u recomputed from the current w."""
        return replace(self, u={name: self.prox(name, self.w[name]) for name in self.partitions})

    def sparse_params(self) -> Params:
        """w with every grouped tensor replaced by its u."""
        return {name: self.u.get(name, tensor) for name, tensor in self.w.items()}

    def with_eta(self, eta: float) -> "SplitState":
        return replace(self, eta=eta)


def project_binary(
    w_f: Params,
    binary_names: Tuple[str, ...],
    partitions: Dict[str, GroupPartition],
    mask: Optional[ChannelMask] = None,
) -> Params:
    """Per-tensor binary projection; names outside ``binary_names`` stay float."""
    projected = {}
    for name, tensor in w_f.items():
        if name not in binary_names:
            projected[name] = tensor
        elif mask is not None and name in partitions:
            projected[name] = binary_project_masked(tensor, mask, partitions[name]).reconstruct()
        else:
            projected[name] = binary_project(tensor).reconstruct()
    return projected


@dataclass(frozen=True)
class BinConnectState:
    """Float shadow weights w_f and their binarized image w."""

    w_f: Params
    w: Params
    eta: float
    rho: float = 0.0
    binary_names: Tuple[str, ...] = ()
    partitions: Dict[str, GroupPartition] = field(default_factory=dict)
    mask: Optional[ChannelMask] = None

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")

    @classmethod
    def init(
        cls,
        w_f: Params,
        eta: float,
        rho: float = 0.0,
        binary_names: Optional[Tuple[str, ...]] = None,
        partitions: Optional[Dict[str, GroupPartition]] = None,
        mask: Optional[ChannelMask] = None,
    ) -> "BinConnectState":
        """Warm start: w = proj(w_f). Every tensor is binarized unless ``binary_names`` says otherwise."""
        names = tuple(w_f) if binary_names is None else tuple(binary_names)
        parts = dict(partitions or {})
        w = project_binary(w_f, names, parts, mask)
        return cls(w_f=dict(w_f), w=w, eta=eta, rho=rho, binary_names=names, partitions=parts, mask=mask)

    def project(self, w_f: Params) -> Params:
        return project_binary(w_f, self.binary_names, self.partitions, self.mask)

    def with_eta(self, eta: float) -> "BinConnectState":
        return replace(self, eta=eta)


@dataclass(frozen=True)
class EquilibriumResidual:
    """Distance of (u, w) from the limit-point system u = Prox(w), grad = beta (u - w)."""

    r_prox: float
    r_grad: float
