"""Minibatch update strategies, one per training method.

A strategy owns the optimizer state of one stage and exposes the parameters
that stage evaluates and checkpoints (its effective parameters).
"""

from abc import ABC, abstractmethod
from dataclasses import replace
from typing import Dict, Optional, Tuple, Type

import torch

from src.exceptions import StageConfigError
from src.models import WEIGHT_NAMES, Model, enforce_mask, loss_and_grads
from src.optim import (
    BinConnectState,
    SplitState,
    add_weight_decay,
    bc_step,
    blended_bc_step,
    equilibrium_residual,
    gl_params_step,
    gsbc_prox_point,
    gsbc_step,
    lagrangian,
    rgsm_step,
    sgd_step,
)
from src.optim.state import Params
from src.schemas.training.stage import Method, StageConfig

# Groups with a norm at or below this count as zero for the gl method.
GL_ZERO_TOLERANCE = 1e-12


def full_batch_loss_and_grads(
    model: Model, features: torch.Tensor, labels: torch.Tensor, params: Params, chunk_size: int = 256
) -> Tuple[float, Params]:
    """Mean loss and gradient over all examples, accumulated chunk by chunk."""
    total = features.shape[0]
    loss_sum = 0.0
    grad_sum: Dict[str, torch.Tensor] = {name: torch.zeros_like(p) for name, p in params.items()}
    for start in range(0, total, chunk_size):
        stop = min(start + chunk_size, total)
        loss, grads = loss_and_grads(model, features[start:stop], labels[start:stop], params)
        weight = stop - start
        loss_sum += loss * weight
        for name, grad in grads.items():
            grad_sum[name] += grad * weight
    return loss_sum / total, {name: grad / total for name, grad in grad_sum.items()}


class UpdateStrategy(ABC):
    """Base class of the per-method training steps."""

    method: Method
    sparsity_tolerance: float = 0.0

    def __init__(self, model: Model, config: StageConfig):
        self.model = model
        self.config = config

    def _gradients(self, batch: torch.Tensor, labels: torch.Tensor, params: Params) -> Tuple[float, Params]:
        loss, grads = loss_and_grads(self.model, batch, labels, params)
        grads = add_weight_decay(grads, params, self.config.weight_decay, WEIGHT_NAMES)
        return loss, grads

    def _masked(self, params: Params) -> Params:
        return enforce_mask(params, self.model.mask)

    @abstractmethod
    def step(self, batch: torch.Tensor, labels: torch.Tensor, eta: float) -> float:
        """One minibatch update; returns the minibatch loss at the evaluation point."""

    @abstractmethod
    def effective_params(self) -> Params:
        """Parameters the stage evaluates and checkpoints."""

    def sparsity_tensor(self) -> torch.Tensor:
        return self.effective_params()["conv2.weight"]

    def diagnostics(self, features: torch.Tensor, labels: torch.Tensor) -> Dict[str, Optional[float]]:
        return {}


class SGDStrategy(UpdateStrategy):
    method = Method.SGD

    def __init__(self, model: Model, config: StageConfig):
        super().__init__(model, config)
        self.params = self._masked(model.params)

    def step(self, batch: torch.Tensor, labels: torch.Tensor, eta: float) -> float:
        loss, grads = self._gradients(batch, labels, self.params)
        self.params = self._masked(sgd_step(self.params, grads, eta))
        return loss

    def effective_params(self) -> Params:
        return self.params


class GroupLassoStrategy(SGDStrategy):
    """Subgradient descent on loss + mu * ||conv2 channels||_GL."""

    method = Method.GL
    sparsity_tolerance = GL_ZERO_TOLERANCE

    def step(self, batch: torch.Tensor, labels: torch.Tensor, eta: float) -> float:
        loss, grads = self._gradients(batch, labels, self.params)
        partitions = {"conv2.weight": self.model.channel_partition}
        self.params = self._masked(gl_params_step(self.params, grads, self.config.mu, eta, partitions))
        return loss


class SplitStrategy(UpdateStrategy):
    """rgsm and gsbc: w is trained, the channel-sparse u = Prox(w) is reported."""

    def __init__(self, model: Model, config: StageConfig):
        super().__init__(model, config)
        self.method = config.method
        self.state = SplitState.init(
            self._masked(model.params),
            {"conv2.weight": model.channel_partition},
            eta=config.eta,
            beta=config.beta,
            lam=config.lam,
            penalty=config.penalty,
        )

    def step(self, batch: torch.Tensor, labels: torch.Tensor, eta: float) -> float:
        state = self.state.with_eta(eta)
        if self.method == Method.GSBC:
            loss, grads = self._gradients(batch, labels, gsbc_prox_point(state))
            state = gsbc_step(state, grads)
        else:
            loss, grads = self._gradients(batch, labels, state.w)
            state = rgsm_step(state, grads)
        if self.model.mask is not None:
            state = replace(state, w=self._masked(state.w))
        self.state = state
        return loss

    def effective_params(self) -> Params:
        return self.state.refreshed().sparse_params()

    def diagnostics(self, features: torch.Tensor, labels: torch.Tensor) -> Dict[str, Optional[float]]:
        """Full-batch Lagrangian at (Prox(w^t), w^t) and equilibrium residual.

        After a step the stored u is still Prox(w^{t-1}), so ``r_prox`` is the
        lag ||Prox(w^{t-1}) - Prox(w^t)|| and vanishes only at a fixed point.
        """
        loss, grads = full_batch_loss_and_grads(self.model, features, labels, self.state.w)
        grads = add_weight_decay(grads, self.state.w, self.config.weight_decay, WEIGHT_NAMES)
        residual = equilibrium_residual(self.state, grads)
        return {
            "lagrangian": lagrangian(self.state.refreshed(), loss),
            "r_prox": residual.r_prox,
            "r_grad": residual.r_grad,
        }


class BinaryConnectStrategy(UpdateStrategy):
    """bc and blended_bc with float shadow weights warm-started from the model."""

    def __init__(self, model: Model, config: StageConfig):
        super().__init__(model, config)
        self.method = config.method
        self.state = BinConnectState.init(
            self._masked(model.params),
            eta=config.eta,
            rho=config.rho,
            binary_names=WEIGHT_NAMES,
            partitions=model.partitions,
            mask=model.mask,
        )

    def step(self, batch: torch.Tensor, labels: torch.Tensor, eta: float) -> float:
        state = self.state.with_eta(eta)
        loss, grads = self._gradients(batch, labels, state.w)
        state = blended_bc_step(state, grads) if self.method == Method.BLENDED_BC else bc_step(state, grads)
        if self.model.mask is not None:
            state = replace(state, w_f=self._masked(state.w_f), w=self._masked(state.w))
        self.state = state
        return loss

    def effective_params(self) -> Params:
        return self.state.w


STRATEGIES: Dict[Method, Type[UpdateStrategy]] = {
    Method.SGD: SGDStrategy,
    Method.GL: GroupLassoStrategy,
    Method.RGSM: SplitStrategy,
    Method.GSBC: SplitStrategy,
    Method.BC: BinaryConnectStrategy,
    Method.BLENDED_BC: BinaryConnectStrategy,
}


def make_strategy(model: Model, config: StageConfig) -> UpdateStrategy:
    try:
        strategy_cls = STRATEGIES[config.method]
    except KeyError as e:
        raise StageConfigError(f"No update strategy for method '{config.method}'") from e
    return strategy_cls(model, config)
