"""Training update rules.

Every rule is a pure function of the current state and a gradient and
returns a new state; the caller decides where the gradient is evaluated
(w for rgsm/gl/sgd, the prox point for gsbc, the binarized weights for bc).
"""

from dataclasses import replace
from typing import Dict, Iterable, Optional

import torch

from src.exceptions import DimensionError, NegativeThresholdError
from src.schemas.sparsity.groups import GroupPartition
from src.sparsity.grouping import extract_groups, scatter_groups

from .state import BinConnectState, Params, SplitState


def _check_grads(params: Params, grads: Params) -> None:
    for name, tensor in params.items():
        if name not in grads or grads[name].shape != tensor.shape:
            raise DimensionError(f"gradient for '{name}' missing or misshaped")


def sgd_step(params: Params, grads: Params, eta: float) -> Params:
    """w - eta * grad for every tensor."""
    _check_grads(params, grads)
    return {name: tensor - eta * grads[name] for name, tensor in params.items()}


def add_weight_decay(grads: Params, params: Params, coefficient: float, names: Iterable[str]) -> Params:
    """Merge the weight-decay term c * w into the loss gradient of ``names``."""
    if coefficient == 0:
        return grads
    decayed = dict(grads)
    for name in names:
        decayed[name] = grads[name] + coefficient * params[name]
    return decayed


def rgsm_step(state: SplitState, grad: Params) -> SplitState:
    """u^t = Prox(w^t); w^{t+1} = w^t - eta grad - eta beta (w^t - u^t)."""
    _check_grads(state.w, grad)
    u = {name: state.prox(name, state.w[name]) for name in state.partitions}
    w = {}
    for name, tensor in state.w.items():
        updated = tensor - state.eta * grad[name]
        if name in u:
            updated = updated - state.eta * state.beta * (tensor - u[name])
        w[name] = updated
    return replace(state, w=w, u=u)


def gsbc_prox_point(state: SplitState) -> Params:
    """The point u^t = Prox(w^t) at which gsbc_step expects its gradient."""
    return state.refreshed().sparse_params()


def gsbc_step(state: SplitState, grad_at_u: Params) -> SplitState:
    """u^t = Prox(w^t); w^{t+1} = w^t - eta grad(u^t), no coupling term."""
    _check_grads(state.w, grad_at_u)
    u = {name: state.prox(name, state.w[name]) for name in state.partitions}
    w = {name: tensor - state.eta * grad_at_u[name] for name, tensor in state.w.items()}
    return replace(state, w=w, u=u)


def gl_subgradient(w: torch.Tensor, part: GroupPartition) -> torch.Tensor:
    """w_g / ||w_g|| on nonzero groups, 0 on zero groups."""
    groups = extract_groups(w, part)
    norms = groups.pow(2).sum(dim=1).sqrt()
    nonzero = norms > 0
    inverse = torch.where(nonzero, 1.0 / torch.where(nonzero, norms, torch.ones_like(norms)), torch.zeros_like(norms))
    return scatter_groups(groups * inverse.unsqueeze(1), part)


def gl_penalty_step(
    w: torch.Tensor, grad: torch.Tensor, mu: float, eta: float, part: Optional[GroupPartition] = None
) -> torch.Tensor:
    """Subgradient step on loss + mu * ||w||_GL; without a partition the tensor is ungrouped."""
    if mu < 0:
        raise NegativeThresholdError(f"mu must be nonnegative, got {mu}")
    if grad.shape != w.shape:
        raise DimensionError("gradient and weight shapes differ")
    if part is None:
        return w - eta * grad
    return w - eta * (grad + mu * gl_subgradient(w, part))


def gl_params_step(
    params: Params, grads: Params, mu: float, eta: float, partitions: Dict[str, GroupPartition]
) -> Params:
    """gl_penalty_step over a parameter dict."""
    _check_grads(params, grads)
    return {
        name: gl_penalty_step(tensor, grads[name], mu, eta, partitions.get(name))
        for name, tensor in params.items()
    }


def bc_step(state: BinConnectState, grad_at_w: Params) -> BinConnectState:
    """w_f <- w_f - eta grad(w); w <- proj(w_f)."""
    _check_grads(state.w_f, grad_at_w)
    w_f = {name: tensor - state.eta * grad_at_w[name] for name, tensor in state.w_f.items()}
    return replace(state, w_f=w_f, w=state.project(w_f))


def blended_bc_step(state: BinConnectState, grad_at_w: Params) -> BinConnectState:
    """w_f <- (1 - rho) w_f + rho w - eta grad(w); w <- proj(w_f)."""
    _check_grads(state.w_f, grad_at_w)
    rho = state.rho
    w_f = {
        name: (1.0 - rho) * tensor + rho * state.w[name] - state.eta * grad_at_w[name]
        for name, tensor in state.w_f.items()
    }
    return replace(state, w_f=w_f, w=state.project(w_f))
