from .kws import (
    BIAS_NAMES,
    WEIGHT_NAMES,
    Model,
    apply_mask,
    batch_loss,
    binarize_model,
    build_model,
    channel_bars,
    check_gradients,
    enforce_mask,
    forward,
    loss_and_grads,
    mask_from_weights,
    validate_config,
)

__all__ = [
    "BIAS_NAMES",
    "WEIGHT_NAMES",
    "Model",
    "apply_mask",
    "batch_loss",
    "binarize_model",
    "build_model",
    "channel_bars",
    "check_gradients",
    "enforce_mask",
    "forward",
    "loss_and_grads",
    "mask_from_weights",
    "validate_config",
]
