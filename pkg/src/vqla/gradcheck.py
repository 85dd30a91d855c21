"""Central finite-difference verification of autograd gradients."""

from __future__ import annotations

import torch


def numeric_gradient(loss_fn, param: torch.Tensor, step: float = 1e-5) -> torch.Tensor:
    """Per-element central differences of loss_fn with respect to param."""
    grad = torch.zeros_like(param)
    flat_param = param.data.view(-1)
    flat_grad = grad.view(-1)
    with torch.no_grad():
        for i in range(flat_param.numel()):
            original = flat_param[i].item()
            flat_param[i] = original + step
            plus = float(loss_fn())
            flat_param[i] = original - step
            minus = float(loss_fn())
            flat_param[i] = original
            flat_grad[i] = (plus - minus) / (2.0 * step)
    return grad


def max_relative_error(loss_fn, params, step: float = 1e-5) -> float:
    """Worst relative disagreement between autograd and central differences.

    For elements where both gradients are below 1e-6 in magnitude the absolute
    difference is used instead of the ratio.
    """
    params = [p for p in params if p.requires_grad]
    if not params:
        raise ValueError("no trainable parameters to check")
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    worst = 0.0
    for param, grad in zip(params, grads):
        analytic = torch.zeros_like(param) if grad is None else grad
        numeric = numeric_gradient(loss_fn, param, step)
        diff = (analytic - numeric).abs()
        denom = torch.maximum(analytic.abs(), numeric.abs())
        err = torch.where(denom < 1e-6, diff, diff / denom.clamp_min(1e-300))
        worst = max(worst, float(err.max()))
    return worst
