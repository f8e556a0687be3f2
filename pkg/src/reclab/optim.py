"""Rectified Adam with decoupled weight decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .errors import ShapeMismatch

# variance is treated as tractable once the SMA length exceeds this
RECTIFY_THRESHOLD = 5.0


@dataclass
class RAdamState:
    step: int = 0
    exp_avg: torch.Tensor | None = None
    exp_avg_sq: torch.Tensor | None = None


def rectification(step: int, beta2: float) -> float | None:
    """Variance rectification factor ``r_t``, or None before it is defined."""
    rho_inf = 2.0 / (1.0 - beta2) - 1.0
    b2t = beta2 ** step
    rho_t = rho_inf - 2.0 * step * b2t / (1.0 - b2t)
    if rho_t <= RECTIFY_THRESHOLD:
        return None
    return math.sqrt((rho_t - 4) * (rho_t - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho_t))


@torch.no_grad()
def optimizer_step(
    param: torch.Tensor,
    grad: torch.Tensor,
    state: RAdamState,
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> RAdamState:
    """One in-place update of ``param``; returns the advanced state."""
    if grad.shape != param.shape:
        raise ShapeMismatch(f"gradient {tuple(grad.shape)} vs parameter {tuple(param.shape)}")
    beta1, beta2 = betas
    if state.exp_avg is None:
        state.exp_avg = torch.zeros_like(param)
        state.exp_avg_sq = torch.zeros_like(param)
    state.step += 1
    t = state.step

    if weight_decay:
        param.mul_(1.0 - lr * weight_decay)
    state.exp_avg.mul_(beta1).add_(grad, alpha=1 - beta1)
    state.exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)

    m_hat = state.exp_avg / (1 - beta1 ** t)
    r = rectification(t, beta2)
    if r is None:
        param.add_(m_hat, alpha=-lr)
    else:
        v_hat = state.exp_avg_sq / (1 - beta2 ** t)
        param.add_(r * m_hat / (v_hat.sqrt() + eps), alpha=-lr)
    return state


@dataclass
class RAdam:
    """Minimal optimizer object driving ``optimizer_step`` over a parameter list."""

    params: list
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    states: list[RAdamState] = field(default_factory=list)

    def __post_init__(self):
        self.params = [p for p in self.params if p.requires_grad]
        self.states = [RAdamState() for _ in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            if p.grad is not None:
                optimizer_step(p.data, p.grad, s, self.lr, self.betas, self.eps, self.weight_decay)
