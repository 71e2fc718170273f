"""Two-conv-layer keyword CNN with the channel-masking layer.

conv1 -> relu -> maxpool -> mask -> conv2 -> relu -> dense -> softmax.
The mask multiplies the pooled conv1 feature maps channel-wise, so a masked
channel g contributes nothing downstream and receives zero gradient.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import torch

from src.exceptions import DimensionError, MaskError, ModelConfigError
from src.nn import (
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    finite_difference_check,
    maxpool_backward,
    maxpool_forward,
    relu_backward,
    relu_forward,
    softmax_cross_entropy,
)
from src.optim.state import project_binary
from src.schemas.model.config import ModelConfig
from src.schemas.sparsity.groups import ChannelMask, GroupPartition
from src.sparsity.grouping import zero_groups

logger = logging.getLogger(__name__)

Params = Dict[str, torch.Tensor]

WEIGHT_NAMES: Tuple[str, ...] = ("conv1.weight", "conv2.weight", "dense.weight")
BIAS_NAMES: Tuple[str, ...] = ("conv1.bias", "conv2.bias", "dense.bias")


@dataclass(frozen=True)
class Model:
    config: ModelConfig
    params: Params
    mask: Optional[ChannelMask] = None

    @property
    def channel_partition(self) -> GroupPartition:
        """Channel groups W[:, :, g, :] of the second conv kernel."""
        return GroupPartition(target="conv2.weight", shape=self.config.conv2.kernel_shape, axis=2)

    @property
    def filter_partition(self) -> GroupPartition:
        """Filter groups of the first conv kernel; filter g feeds channel g."""
        return GroupPartition(target="conv1.weight", shape=self.config.conv1.kernel_shape, axis=3)

    @property
    def partitions(self) -> Dict[str, GroupPartition]:
        return {"conv1.weight": self.filter_partition, "conv2.weight": self.channel_partition}

    def with_params(self, params: Params) -> "Model":
        return replace(self, params=dict(params))


def validate_config(config: ModelConfig) -> None:
    """Check that every layer fits its input and the shapes chain."""
    if config.conv1.channels != 1:
        raise ModelConfigError(f"conv1 takes a single-channel spectrogram, got {config.conv1.channels} channels")
    if config.conv1.filters != config.conv2.channels:
        raise ModelConfigError(
            f"conv1 filters ({config.conv1.filters}) must equal conv2 channels ({config.conv2.channels})"
        )
    if config.conv1.m > config.t or config.conv1.r > config.f:
        raise ModelConfigError(f"conv1 kernel larger than input {config.t}x{config.f}")
    height, width = config.conv1_hw
    if height < 1 or width < 1:
        raise ModelConfigError("conv1 output is empty")
    if config.pool.p > height or config.pool.q > width:
        raise ModelConfigError(f"pool window larger than conv1 output {height}x{width}")
    height, width = config.pool_hw
    if config.conv2.m > height or config.conv2.r > width:
        raise ModelConfigError(f"conv2 kernel larger than pooled maps {height}x{width}")
    if min(config.conv2_hw) < 1:
        raise ModelConfigError("conv2 output is empty")


def _fans(name: str, shape: Tuple[int, ...]) -> Tuple[int, int]:
    if name.startswith("conv"):
        m, r, c_in, n = shape
        return m * r * c_in, m * r * n
    return shape[0], shape[1]


def build_model(config: ModelConfig) -> Model:
    """Glorot-uniform weights, zero biases, seeded by ``config.seed``."""
    validate_config(config)
    generator = torch.Generator().manual_seed(config.seed)
    params: Params = {}
    for name, shape in config.parameter_shapes().items():
        if name in WEIGHT_NAMES:
            fan_in, fan_out = _fans(name, shape)
            limit = (6.0 / (fan_in + fan_out)) ** 0.5
            params[name] = (torch.rand(shape, generator=generator, dtype=torch.float64) * 2.0 - 1.0) * limit
        else:
            params[name] = torch.zeros(shape, dtype=torch.float64)
    logger.debug(f"Built model with {sum(p.numel() for p in params.values())} parameters")
    return Model(config=config, params=params)


def _check_batch(config: ModelConfig, batch: torch.Tensor) -> torch.Tensor:
    if batch.dim() == 2:
        batch = batch.unsqueeze(0)
    if batch.dim() != 3 or tuple(batch.shape[1:]) != (config.t, config.f):
        raise DimensionError(f"expected batches of {config.t}x{config.f} inputs, got {tuple(batch.shape)}")
    return batch.to(torch.float64)


def _forward(model: Model, batch: torch.Tensor, params: Params) -> Tuple[torch.Tensor, dict]:
    cfg = model.config
    x = _check_batch(cfg, batch).unsqueeze(-1)
    a1 = conv2d_forward(x, params["conv1.weight"], cfg.conv1.s, cfg.conv1.u) + params["conv1.bias"]
    r1 = relu_forward(a1)
    p1, argmax = maxpool_forward(r1, cfg.pool.p, cfg.pool.q)
    keep = model.mask.to_tensor() if model.mask is not None else None
    m1 = p1 * keep if keep is not None else p1
    a2 = conv2d_forward(m1, params["conv2.weight"], cfg.conv2.s, cfg.conv2.u) + params["conv2.bias"]
    r2 = relu_forward(a2)
    flat = r2.reshape(r2.shape[0], -1)
    logits = dense_forward(flat, params["dense.weight"], params["dense.bias"])
    cache = {"x": x, "a1": a1, "r1": r1, "argmax": argmax, "keep": keep, "m1": m1, "a2": a2, "flat": flat}
    return logits, cache


def forward(model: Model, batch: torch.Tensor, params: Optional[Params] = None) -> torch.Tensor:
    """Logits of shape (batch, K)."""
    logits, _ = _forward(model, batch, params if params is not None else model.params)
    return logits


def loss_and_grads(
    model: Model, batch: torch.Tensor, labels: torch.Tensor, params: Optional[Params] = None
) -> Tuple[float, Params]:
    """Mean cross entropy over the batch and its gradient for every parameter.

    ``params`` overrides the model's own tensors, which lets the update rules
    evaluate the gradient at a prox point or at binarized weights.
    """
    cfg = model.config
    params = params if params is not None else model.params
    logits, cache = _forward(model, batch, params)
    loss, g_logits = softmax_cross_entropy(logits, labels)

    g_flat, g_dense_w, g_dense_b = dense_backward(cache["flat"], params["dense.weight"], g_logits)
    g_a2 = relu_backward(cache["a2"], g_flat.reshape(cache["a2"].shape))
    g_m1, g_conv2_w = conv2d_backward(cache["m1"], params["conv2.weight"], g_a2, cfg.conv2.s, cfg.conv2.u)
    g_p1 = g_m1 * cache["keep"] if cache["keep"] is not None else g_m1
    g_r1 = maxpool_backward(g_p1, cache["argmax"], tuple(cache["r1"].shape), cfg.pool.p, cfg.pool.q)
    g_a1 = relu_backward(cache["a1"], g_r1)
    _, g_conv1_w = conv2d_backward(cache["x"], params["conv1.weight"], g_a1, cfg.conv1.s, cfg.conv1.u)

    grads = {
        "conv1.weight": g_conv1_w,
        "conv1.bias": g_a1.sum(dim=(0, 1, 2)),
        "conv2.weight": g_conv2_w,
        "conv2.bias": g_a2.sum(dim=(0, 1, 2)),
        "dense.weight": g_dense_w,
        "dense.bias": g_dense_b,
    }
    return loss, grads


def batch_loss(model: Model, batch: torch.Tensor, labels: torch.Tensor, params: Optional[Params] = None) -> float:
    loss, _ = softmax_cross_entropy(forward(model, batch, params), labels)
    return loss


def check_gradients(
    model: Model,
    batch: torch.Tensor,
    labels: torch.Tensor,
    epsilon: float = 1e-5,
    samples_per_tensor: Optional[int] = 20,
    seed: int = 0,
) -> float:
    """Max relative finite-difference error of loss_and_grads at the model's parameters."""
    _, grads = loss_and_grads(model, batch, labels)
    return finite_difference_check(
        lambda shifted: batch_loss(model, batch, labels, shifted),
        model.params,
        grads,
        epsilon=epsilon,
        samples_per_tensor=samples_per_tensor,
        seed=seed,
    )


def enforce_mask(params: Params, mask: Optional[ChannelMask]) -> Params:
    """Zero conv1 filter g, its bias and conv2 slice W[:, :, g, :] for every masked g."""
    if mask is None:
        return params
    keep = mask.to_tensor(params["conv2.weight"].dtype)
    masked = dict(params)
    masked["conv1.weight"] = params["conv1.weight"] * keep
    masked["conv1.bias"] = params["conv1.bias"] * keep
    masked["conv2.weight"] = params["conv2.weight"] * keep.view(1, 1, -1, 1)
    return masked


def apply_mask(model: Model, mask: ChannelMask) -> Model:
    """Freeze ``mask`` into the model and zero the masked coordinates."""
    channels = model.config.conv2.channels
    if mask.num_channels != channels:
        raise MaskError(f"mask covers {mask.num_channels} channels, model has {channels}")
    if mask.num_pruned == channels:
        raise MaskError("mask prunes every channel")
    logger.info(f"Applying channel mask: {mask.num_pruned}/{channels} channels pruned")
    return replace(model, params=enforce_mask(model.params, mask), mask=mask)


def mask_from_weights(model: Model, u: Optional[torch.Tensor] = None, tol: float = 0.0) -> ChannelMask:
    """Bit g is 0 iff the conv2 channel group has norm <= tol (exact zero by default).

    ``u`` is the group-sparse auxiliary conv2 tensor of a splitting run; the
    model's own conv2 kernel is used when it is omitted.
    """
    tensor = u if u is not None else model.params["conv2.weight"]
    zeros = zero_groups(tensor, model.channel_partition, tol)
    return ChannelMask.from_tensor(~zeros)


def channel_bars(mask: ChannelMask) -> List[int]:
    """Remaining-channel bar data: channel index -> 1 if kept, 0 if pruned."""
    return list(mask.bits)


def binarize_model(model: Model) -> Model:
    """Replace every weight tensor by its (masked) scale x sign projection; biases stay float."""
    params = project_binary(model.params, WEIGHT_NAMES, model.partitions, model.mask)
    return model.with_params(params)
