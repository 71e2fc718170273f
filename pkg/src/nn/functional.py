"""Forward and backward passes of the keyword CNN layers.

Activations are laid out (batch, time, frequency, channels); a missing batch
axis is accepted and restored on output. Conv kernels are (m, r, C_in, n),
dense weights (D_in, D_out) with ``output = input @ weight + bias``.
"""

import logging
from typing import Tuple, Union

import torch

from src.exceptions import DimensionError, LabelIndexError

logger = logging.getLogger(__name__)


def _as_batch(x: torch.Tensor) -> Tuple[torch.Tensor, bool]:
    if x.dim() == 3:
        return x.unsqueeze(0), True
    if x.dim() == 4:
        return x, False
    raise DimensionError(f"expected a (t, f, C) or (B, t, f, C) tensor, got shape {tuple(x.shape)}")


def _conv_output_hw(t: int, f: int, m: int, r: int, stride_t: int, stride_f: int) -> Tuple[int, int]:
    if m > t or r > f:
        raise DimensionError(f"kernel {m}x{r} larger than input {t}x{f}")
    if stride_t < 1 or stride_f < 1:
        raise DimensionError(f"strides must be positive, got ({stride_t}, {stride_f})")
    return (t - m + 1) // stride_t, (f - r + 1) // stride_f


def _patches(x: torch.Tensor, m: int, r: int, stride_t: int, stride_f: int, out_t: int, out_f: int) -> torch.Tensor:
    # (B, out_t, out_f, C_in, m, r) strided view, no copy
    return x.unfold(1, m, stride_t).unfold(2, r, stride_f)[:, :out_t, :out_f]


def conv2d_forward(
    input: torch.Tensor, kernel: torch.Tensor, stride_t: int = 1, stride_f: int = 1
) -> torch.Tensor:
    """Valid convolution; output is floor((t-m+1)/s) x floor((f-r+1)/u) x n.

    Args:
        input: (t, f, C_in) or (B, t, f, C_in).
        kernel: (m, r, C_in, n).
        stride_t: time stride s.
        stride_f: frequency stride u.
    Returns:
        Feature maps with the same batch convention as ``input``.
    Raises:
        DimensionError: on channel mismatch or a kernel larger than the input.
    """
    x, squeeze = _as_batch(input)
    if kernel.dim() != 4:
        raise DimensionError(f"kernel must be (m, r, C_in, n), got shape {tuple(kernel.shape)}")
    batch, t, f, c_in = x.shape
    m, r, k_in, n = kernel.shape
    if c_in != k_in:
        raise DimensionError(f"input has {c_in} channels but kernel expects {k_in}")
    out_t, out_f = _conv_output_hw(t, f, m, r, stride_t, stride_f)

    patches = _patches(x, m, r, stride_t, stride_f, out_t, out_f)
    out = torch.einsum("btfcmr,mrcn->btfn", patches, kernel)
    return out.squeeze(0) if squeeze else out


def conv2d_backward(
    input: torch.Tensor,
    kernel: torch.Tensor,
    grad_out: torch.Tensor,
    stride_t: int = 1,
    stride_f: int = 1,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Gradients of conv2d_forward with respect to input and kernel."""
    x, squeeze = _as_batch(input)
    g, _ = _as_batch(grad_out)
    batch, t, f, c_in = x.shape
    m, r, k_in, n = kernel.shape
    if c_in != k_in:
        raise DimensionError(f"input has {c_in} channels but kernel expects {k_in}")
    out_t, out_f = _conv_output_hw(t, f, m, r, stride_t, stride_f)
    if tuple(g.shape) != (batch, out_t, out_f, n):
        raise DimensionError(
            f"grad_out shape {tuple(g.shape)} does not match conv output {(batch, out_t, out_f, n)}"
        )

    patches = _patches(x, m, r, stride_t, stride_f, out_t, out_f)
    grad_kernel = torch.einsum("btfcmr,btfn->mrcn", patches, g)
    grad_patches = torch.einsum("btfn,mrcn->mrbtfc", g, kernel)
    grad_input = torch.zeros_like(x)
    # scatter each kernel offset back onto its shifted strided view
    for a in range(m):
        for b in range(r):
            rows = slice(a, a + stride_t * out_t, stride_t)
            cols = slice(b, b + stride_f * out_f, stride_f)
            grad_input[:, rows, cols, :] += grad_patches[a, b]
    return (grad_input.squeeze(0) if squeeze else grad_input), grad_kernel


def _pool_windows(x: torch.Tensor, p: int, q: int) -> torch.Tensor:
    batch, height, width, channels = x.shape
    out_h, out_w = height // p, width // q
    trimmed = x[:, : out_h * p, : out_w * q, :]
    # (B, out_h, out_w, C, p*q) with window entries in row-major order
    return (
        trimmed.reshape(batch, out_h, p, out_w, q, channels)
        .permute(0, 1, 3, 5, 2, 4)
        .reshape(batch, out_h, out_w, channels, p * q)
    )


def maxpool_forward(input: torch.Tensor, p: int, q: int) -> Tuple[torch.Tensor, torch.Tensor]:
    """Non-overlapping p x q max-pooling.

    Trailing rows/columns that do not fill a window are dropped. Ties go to
    the first entry of the window in row-major order.

    Returns:
        (pooled, argmax) where argmax holds the in-window index of each maximum.
    """
    x, squeeze = _as_batch(input)
    _, height, width, _ = x.shape
    if p < 1 or q < 1 or p > height or q > width:
        raise DimensionError(f"pool window {p}x{q} does not fit input {height}x{width}")
    windows = _pool_windows(x, p, q)
    pooled, argmax = windows.max(dim=-1)
    if squeeze:
        return pooled.squeeze(0), argmax.squeeze(0)
    return pooled, argmax


def maxpool_backward(
    grad_out: torch.Tensor, argmax: torch.Tensor, input_shape: Tuple[int, ...], p: int, q: int
) -> torch.Tensor:
    """Route each pooled gradient to the argmax position of its window."""
    g, squeeze = _as_batch(grad_out)
    idx, _ = _as_batch(argmax)
    shape = tuple(input_shape) if len(input_shape) == 4 else (1, *input_shape)
    batch, height, width, channels = shape
    out_h, out_w = height // p, width // q
    if tuple(g.shape) != (batch, out_h, out_w, channels):
        raise DimensionError(f"grad_out shape {tuple(g.shape)} does not match pooled shape")

    windows = g.new_zeros((batch, out_h, out_w, channels, p * q))
    windows.scatter_(-1, idx.unsqueeze(-1), g.unsqueeze(-1))
    grad_input = g.new_zeros(shape)
    grad_input[:, : out_h * p, : out_w * q, :] = (
        windows.reshape(batch, out_h, out_w, channels, p, q)
        .permute(0, 1, 4, 2, 5, 3)
        .reshape(batch, out_h * p, out_w * q, channels)
    )
    return grad_input.squeeze(0) if squeeze else grad_input


def relu_forward(input: torch.Tensor) -> torch.Tensor:
    return input.clamp_min(0.0)


def relu_backward(input: torch.Tensor, grad_out: torch.Tensor) -> torch.Tensor:
    # subgradient 0 at the kink
    return grad_out * (input > 0).to(grad_out.dtype)


def dense_forward(input: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Affine map ``input @ weight + bias`` for a row vector or a batch of rows."""
    if weight.dim() != 2 or input.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"input features {tuple(input.shape)} do not match weight {tuple(weight.shape)}"
        )
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"bias shape {tuple(bias.shape)} does not match weight {tuple(weight.shape)}")
    return input @ weight + bias


def dense_backward(
    input: torch.Tensor, weight: torch.Tensor, grad_out: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Gradients (grad_input, grad_weight, grad_bias) of dense_forward."""
    if input.shape[-1] != weight.shape[0] or grad_out.shape[-1] != weight.shape[1]:
        raise DimensionError("dense_backward shapes do not chain")
    x = input.reshape(-1, weight.shape[0])
    g = grad_out.reshape(-1, weight.shape[1])
    grad_input = (g @ weight.T).reshape(input.shape)
    return grad_input, x.T @ g, g.sum(dim=0)


def softmax(logits: torch.Tensor) -> torch.Tensor:
    shifted = logits - logits.max(dim=-1, keepdim=True).values
    exp = shifted.exp()
    return exp / exp.sum(dim=-1, keepdim=True)


def softmax_cross_entropy(
    logits: torch.Tensor, labels: Union[int, torch.Tensor]
) -> Tuple[float, torch.Tensor]:
    """Cross entropy of softmax(logits) against class indices.

    A single logit vector with an integer label gives ``-log softmax[label]``
    and ``softmax - onehot``. A (B, K) batch gives the mean loss and the
    gradient of that mean.
    """
    single = logits.dim() == 1
    batch_logits = logits.unsqueeze(0) if single else logits
    num_classes = batch_logits.shape[-1]
    target = torch.as_tensor(labels, dtype=torch.long).reshape(-1)
    if target.numel() != batch_logits.shape[0]:
        raise DimensionError(f"{target.numel()} labels for {batch_logits.shape[0]} logit rows")
    if bool(((target < 0) | (target >= num_classes)).any()):
        raise LabelIndexError(f"labels must lie in 0..{num_classes - 1}, got {target.tolist()}")

    shifted = batch_logits - batch_logits.max(dim=-1, keepdim=True).values
    log_norm = shifted.exp().sum(dim=-1).log()
    rows = torch.arange(batch_logits.shape[0])
    losses = log_norm - shifted[rows, target]
    probs = softmax(batch_logits)
    grad = probs.clone()
    grad[rows, target] -= 1.0
    if single:
        return float(losses[0]), grad[0]
    batch = batch_logits.shape[0]
    return float(losses.mean()), grad / batch
