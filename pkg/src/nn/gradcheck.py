import logging
from typing import Callable, Dict, Optional

import torch

from src.exceptions import GradientCheckError

logger = logging.getLogger(__name__)

LossFn = Callable[[Dict[str, torch.Tensor]], float]


def finite_difference_check(
    loss_fn: LossFn,
    params: Dict[str, torch.Tensor],
    analytic: Dict[str, torch.Tensor],
    epsilon: float = 1e-5,
    samples_per_tensor: Optional[int] = 20,
    seed: int = 0,
) -> float:
    """Compare analytic gradients with central differences.

    Args:
        loss_fn: deterministic loss of a parameter dict.
        params: point at which ``analytic`` was evaluated; left unmodified.
        analytic: gradient tensors keyed like ``params``.
        epsilon: central-difference step, in (0, 1e-3].
        samples_per_tensor: coordinates sampled per tensor, None for all.
        seed: coordinate sampling seed.
    Returns:
        max |analytic - numeric| / max(1, |analytic|) over the sampled coordinates.
    Raises:
        GradientCheckError: if epsilon is outside (0, 1e-3].
    """
    if not 0.0 < epsilon <= 1e-3:
        raise GradientCheckError(f"epsilon must lie in (0, 1e-3], got {epsilon}")

    generator = torch.Generator().manual_seed(seed)
    shifted = {name: tensor.clone() for name, tensor in params.items()}
    worst = 0.0
    for name, tensor in shifted.items():
        flat = tensor.view(-1)
        grad = analytic[name].reshape(-1)
        if samples_per_tensor is None or samples_per_tensor >= flat.numel():
            coords = torch.arange(flat.numel())
        else:
            coords = torch.randperm(flat.numel(), generator=generator)[:samples_per_tensor]
        for index in coords.tolist():
            original = float(flat[index])
            flat[index] = original + epsilon
            upper = loss_fn(shifted)
            flat[index] = original - epsilon
            lower = loss_fn(shifted)
            flat[index] = original
            numeric = (upper - lower) / (2.0 * epsilon)
            exact = float(grad[index])
            error = abs(exact - numeric) / max(1.0, abs(exact))
            worst = max(worst, error)
    logger.debug(f"Finite-difference check max relative error {worst:.3e}")
    return worst
