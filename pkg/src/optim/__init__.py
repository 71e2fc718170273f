"""Update rules and convergence diagnostics."""

from .diagnostics import descent_monitor, equilibrium_residual, lagrangian, successive_difference
from .rules import (
    add_weight_decay,
    bc_step,
    blended_bc_step,
    gl_params_step,
    gl_penalty_step,
    gsbc_prox_point,
    gsbc_step,
    rgsm_step,
    sgd_step,
)
from .state import BinConnectState, EquilibriumResidual, SplitState

__all__ = [
    "BinConnectState",
    "EquilibriumResidual",
    "SplitState",
    "add_weight_decay",
    "bc_step",
    "blended_bc_step",
    "descent_monitor",
    "equilibrium_residual",
    "gl_params_step",
    "gl_penalty_step",
    "gsbc_prox_point",
    "gsbc_step",
    "lagrangian",
    "rgsm_step",
    "sgd_step",
    "successive_difference",
]
