"""Differentiable primitives used by the victim models and the attacks.

Everything runs in float64 on top of ``torch.autograd``: the autograd graph is
the tape, ``torch.Tensor`` is the tensor type. The spike nonlinearity pairs a
hard Heaviside forward with an arctan-shaped surrogate backward that is itself
built from differentiable ops, so gradient-matching attacks can differentiate
through it a second time.
"""

from __future__ import annotations

import math
from typing import Sequence

import torch
import torch.nn.functional as F

from .errors import DimensionError, UsageError

DTYPE = torch.float64

GradientSet = list  # list[torch.Tensor], ordered like the model's ParameterSet


def as_tensor(data, requires_grad: bool = False) -> torch.Tensor:
    """Copy ``data`` into a fresh float64 tensor."""
    t = torch.as_tensor(data, dtype=DTYPE).clone()
    return t.requires_grad_(requires_grad)


def _check_rank(x: torch.Tensor, rank: int, name: str) -> None:
    if x.dim() != rank:
        raise DimensionError(f"{name} must have rank {rank}, got shape {tuple(x.shape)}")


def conv2d(x, weight, bias, stride: int = 1, padding: int = 0):
    """2-D cross-correlation of ``x[B,C,H,W]`` with ``weight[F,C,k,k]`` plus ``bias[F]``."""
    _check_rank(x, 4, "conv2d input")
    _check_rank(weight, 4, "conv2d weight")
    if x.shape[1] != weight.shape[1]:
        raise DimensionError(
            f"conv2d channel mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError(f"conv2d bias must have shape ({weight.shape[0]},)")
    if stride < 1:
        raise UsageError("stride must be >= 1")
    k = weight.shape[-1]
    if k > x.shape[2] + 2 * padding or k > x.shape[3] + 2 * padding:
        raise DimensionError(f"kernel {k} larger than padded input {tuple(x.shape[2:])}")
    return F.conv2d(x, weight, bias, stride=stride, padding=padding)


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def linear(x, weight, bias):
    """``x @ weight.T + bias`` for ``x[B,D]``, ``weight[K,D]``."""
    _check_rank(x, 2, "linear input")
    _check_rank(weight, 2, "linear weight")
    if x.shape[1] != weight.shape[1]:
        raise DimensionError(
            f"linear inner dimension mismatch: {x.shape[1]} vs {weight.shape[1]}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError(f"linear bias must have shape ({weight.shape[0]},)")
    return F.linear(x, weight, bias)


def sigmoid(x):
    return torch.sigmoid(x)


def relu(x):
    return torch.relu(x)


def avg_pool2x2(x):
    _check_rank(x, 4, "avg_pool2x2 input")
    return F.avg_pool2d(x, 2)


def flatten(x):
    """Collapse every axis after the batch axis."""
    return x.reshape(x.shape[0], -1)


def mean_over(x, axis: int):
    return x.mean(dim=axis)


def squared_difference_sum(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return ((a - b) ** 2).sum()


def atan_surrogate_grad(v, alpha: float):
    """Derivative of ``atan((pi/2)*alpha*v)/pi + 1/2`` with respect to ``v``."""
    return alpha / (2.0 * (1.0 + (math.pi / 2.0 * alpha * v) ** 2))


def atan_primitive(v, alpha: float):
    """The smooth function whose derivative the surrogate uses."""
    return torch.atan(math.pi / 2.0 * alpha * v) / math.pi + 0.5


class _HeavisideATan(torch.autograd.Function):
    @staticmethod
    def forward(ctx, v, alpha):
        ctx.save_for_backward(v)
        ctx.alpha = alpha
        return (v >= 0).to(v.dtype)

    @staticmethod
    def backward(ctx, grad_out):
        (v,) = ctx.saved_tensors
        # composed of differentiable ops so create_graph=True yields second derivatives
        return grad_out * atan_surrogate_grad(v, ctx.alpha), None


def spike_heaviside_atan(v, alpha: float = 2.0, smooth: bool = False):
    """Emit a spike wherever ``v >= 0``.

    The backward pass uses the ATan surrogate ``alpha / (2 (1 + (pi/2 alpha v)^2))``.
    With ``smooth=True`` the forward returns the arctan primitive instead of the
    hard step; the result is then an ordinary differentiable function, which is
    what finite-difference checks of spiking graphs compare against.
    """
    if alpha <= 0:
        raise UsageError("alpha must be positive")
    if smooth:
        return atan_primitive(v, alpha)
    return _HeavisideATan.apply(v, alpha)


def softmax_cross_entropy(logits, target):
    """Batch mean of ``-sum_k target_k * log_softmax(logits)_k``.

    ``target`` is either a ``[B,K]`` distribution (one-hot or soft) or a
    ``[B]`` integer tensor of class indices.
    """
    _check_rank(logits, 2, "logits")
    if target.dim() == 1:
        if target.dtype.is_floating_point:
            raise UsageError("class-index targets must be integers")
        target = F.one_hot(target.long(), logits.shape[1]).to(logits.dtype)
    if target.shape != logits.shape:
        raise DimensionError(f"target shape {tuple(target.shape)} != logits {tuple(logits.shape)}")
    return -(target * F.log_softmax(logits, dim=1)).sum(dim=1).mean()


def backward(root, params: Sequence[torch.Tensor], create_graph: bool = False) -> GradientSet:
    """Gradients of scalar ``root`` with respect to ``params``, in the given order.

    Parameters that ``root`` does not depend on get an all-zero gradient.
    """
    if root.dim() != 0 and root.numel() != 1:
        raise UsageError(f"backward root must be scalar, got shape {tuple(root.shape)}")
    if not root.requires_grad:
        raise UsageError("backward root is not attached to any differentiable input")
    grads = torch.autograd.grad(
        root.reshape(()), list(params), create_graph=create_graph, allow_unused=True
    )
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
