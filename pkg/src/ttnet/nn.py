"""Low-level network ops: grouped convs, SeLU, binarization with a
straight-through estimator, the noisy dual-step activation, and PGD.

Backed by torch on CPU; everything here is a thin, explicitly-specified
wrapper so the compiler and verifier can rely on exact semantics:

* bin_act(x) = 1 if x > 0 else 0.  The value at exactly 0 is 0.
* STE backward: gradient passes through where |x| <= 1, zero elsewhere.
* dual_step(x, T): 1 if x >= T/2, 0 if x <= -T/2, Bernoulli(1/2) in the
  noise zone during training; at eval time the noise zone collapses to the
  deterministic bin_act rule.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F


class _SteBinarize(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return (x > 0).to(x.dtype)

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        return grad * (x.abs() <= 1).to(grad.dtype)


def ste_binarize(x: torch.Tensor) -> torch.Tensor:
    return _SteBinarize.apply(x)


class _DualStep(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, t, noise):
        ctx.save_for_backward(x)
        out = (x > 0).to(x.dtype)
        if t > 0 and noise is not None:
            # endpoints stay deterministic: x >= T/2 -> 1, x <= -T/2 -> 0
            zone = x.abs() < t / 2
            out = torch.where(zone, noise.to(x.dtype), out)
        return out

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        return grad * (x.abs() <= 1).to(grad.dtype), None, None


def dual_step(x: torch.Tensor, t: float, training: bool = False,
              generator: torch.Generator | None = None) -> torch.Tensor:
    """Noisy step activation.  Deterministic bin_act when t == 0 or at eval."""
    if t <= 0 or not training:
        return ste_binarize(x)
    noise = torch.randint(0, 2, x.shape, generator=generator,
                          dtype=torch.int8, device=x.device)
    return _DualStep.apply(x, t, noise)


def dual_step_zone(x: torch.Tensor, t: float) -> torch.Tensor:
    """Boolean mask of the noise zone |x| < T/2 (used to mark DCT rows)."""
    if t <= 0:
        return torch.zeros_like(x, dtype=torch.bool)
    return x.abs() < t / 2


def selu(x: torch.Tensor) -> torch.Tensor:
    return F.selu(x)


def conv_grouped(x: torch.Tensor, weight: torch.Tensor,
                 bias: torch.Tensor | None, stride, padding=0,
                 groups: int = 1, dims: int = 1) -> torch.Tensor:
    if dims == 1:
        return F.conv1d(x, weight, bias, stride=stride, padding=padding,
                        groups=groups)
    if dims == 2:
        return F.conv2d(x, weight, bias, stride=stride, padding=padding,
                        groups=groups)
    raise ValueError(f"dims must be 1 or 2, got {dims}")


def pgd_attack(model, x: torch.Tensor, y: torch.Tensor, eps: float,
               steps: int, step_size: float,
               clamp: tuple[float, float] = (0.0, 1.0)) -> torch.Tensor:
    """l-inf PGD starting from x; returns the worst perturbation found."""
    if eps <= 0 or steps <= 0:
        return x
    x_adv = x.detach().clone()
    for _ in range(steps):
        x_adv.requires_grad_(True)
        loss = F.cross_entropy(model(x_adv), y)
        (grad,) = torch.autograd.grad(loss, x_adv)
        with torch.no_grad():
            x_adv = x_adv + step_size * grad.sign()
            x_adv = torch.min(torch.max(x_adv, x - eps), x + eps)
            x_adv = x_adv.clamp(*clamp)
    return x_adv.detach()
