"""Convergence diagnostics of the splitting methods.

The Lagrangian uses mu = lam * beta: minimizing it exactly in u gives a prox
with threshold mu / beta, which is the lam of the update rule.
"""

import logging
import math
from typing import Sequence

from src.schemas.training.stage import Penalty
from src.sparsity.grouping import group_l0_norm, group_lasso_norm

from .state import EquilibriumResidual, Params, SplitState

logger = logging.getLogger(__name__)

DESCENT_TOLERANCE = 1e-10


def lagrangian(state: SplitState, loss_at_w: float) -> float:
    """loss(w) + lam beta P(u) + beta/2 ||w - u||^2 over the grouped tensors."""
    mu = state.lam * state.beta
    penalty = 0.0
    gap = 0.0
    for name, part in state.partitions.items():
        u = state.u[name]
        if state.penalty == Penalty.GL0:
            penalty += group_l0_norm(u, part)
        else:
            penalty += group_lasso_norm(u, part)
        gap += float((state.w[name] - u).pow(2).sum())
    return float(loss_at_w) + mu * penalty + 0.5 * state.beta * gap


def equilibrium_residual(state: SplitState, grad_at_w: Params) -> EquilibriumResidual:
    """r_prox = ||u - Prox(w)||, r_grad = ||grad(w) - beta (u - w)||.

    Ungrouped tensors have u = w, so they contribute ||grad|| to r_grad.
    """
    prox_sq = 0.0
    grad_sq = 0.0
    for name, w in state.w.items():
        grad = grad_at_w[name]
        if name in state.partitions:
            u = state.u[name]
            prox_sq += float((u - state.prox(name, w)).pow(2).sum())
            grad_sq += float((grad - state.beta * (u - w)).pow(2).sum())
        else:
            grad_sq += float(grad.pow(2).sum())
    return EquilibriumResidual(r_prox=math.sqrt(prox_sq), r_grad=math.sqrt(grad_sq))


def descent_monitor(history: Sequence[float], tolerance: float = DESCENT_TOLERANCE) -> int:
    """Number of steps where the Lagrangian rose by more than ``tolerance``."""
    violations = sum(1 for before, after in zip(history, history[1:]) if after > before + tolerance)
    if violations:
        logger.warning(f"Lagrangian increased at {violations} of {max(len(history) - 1, 0)} steps")
    return violations


def successive_difference(previous: SplitState, current: SplitState) -> float:
    """||(u^{t+1}, w^{t+1}) - (u^t, w^t)||."""
    total = 0.0
    for name, w in current.w.items():
        total += float((w - previous.w[name]).pow(2).sum())
    for name, u in current.u.items():
        total += float((u - previous.u[name]).pow(2).sum())
    return math.sqrt(total)
