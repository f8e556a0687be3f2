"""Focal loss and the two-head (city, country) weighted combination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import BatchSizeMismatch, InvalidTarget, NonSimplexInput

PROB_FLOOR = 1e-12
LOG_PROB_FLOOR = math.log(PROB_FLOOR)
SIMPLEX_TOL = 1e-5


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 1.0
    gamma: float = 3.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha={self.alpha} outside [0, 1]")
        if self.gamma < 0:
            raise ValueError(f"gamma={self.gamma} must be >= 0")


CROSS_ENTROPY = FocalParams(alpha=1.0, gamma=0.0)


@dataclass(frozen=True)
class CombinedParams:
    beta: float = 0.5
    city: FocalParams = field(default_factory=FocalParams)
    country: FocalParams = field(default_factory=FocalParams)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta={self.beta} outside [0, 1]")


def _as_tensor(x, dtype=None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x), dtype=dtype)


def _check_targets(targets: torch.Tensor, n_rows: int, n_classes: int) -> None:
    if targets.shape != (n_rows,):
        raise InvalidTarget(f"targets shape {tuple(targets.shape)} != ({n_rows},)")
    if n_rows and (targets.min() < 0 or targets.max() >= n_classes):
        raise InvalidTarget("target index out of range")


def _focal_terms(p_t: torch.Tensor, log_p_t: torch.Tensor, params: FocalParams) -> torch.Tensor:
    return -params.alpha * (1.0 - p_t) ** params.gamma * log_p_t


def focal_loss(probabilities, targets, params: FocalParams = FocalParams()) -> torch.Tensor:
    """Batch mean of ``-alpha (1 - p_t)^gamma log p_t``; ``p_t`` floored at 1e-12."""
    p = _as_tensor(probabilities, torch.float64)
    t = _as_tensor(targets, torch.long).long()
    if p.ndim != 2:
        raise NonSimplexInput("probabilities must be (batch, classes)")
    _check_targets(t, p.shape[0], p.shape[1])
    with torch.no_grad():
        if (p < 0).any() or ((p.sum(dim=1) - 1).abs() > SIMPLEX_TOL).any():
            raise NonSimplexInput("probability rows must be nonnegative and sum to 1")
    p_t = p.gather(1, t[:, None]).squeeze(1).clamp_min(PROB_FLOOR)
    return _focal_terms(p_t, torch.log(p_t), params).mean()


def focal_loss_from_logits(logits: torch.Tensor, targets: torch.Tensor, params: FocalParams = FocalParams()) -> torch.Tensor:
    """Same loss computed from unnormalized scores (``-inf`` entries allowed)."""
    _check_targets(targets, logits.shape[0], logits.shape[1])
    log_p_t = F.log_softmax(logits, dim=1).gather(1, targets[:, None]).squeeze(1)
    log_p_t = log_p_t.clamp_min(LOG_PROB_FLOOR)
    return _focal_terms(log_p_t.exp(), log_p_t, params).mean()


def combine(city_loss, country_loss, beta: float):
    return beta * city_loss + (1.0 - beta) * country_loss


def combined_loss(city_probs, country_probs, city_targets, country_targets,
                  params: CombinedParams = CombinedParams()) -> torch.Tensor:
    if len(city_probs) != len(country_probs) or len(city_targets) != len(country_targets) \
            or len(city_probs) != len(city_targets):
        raise BatchSizeMismatch("city and country batches differ in size")
    return combine(
        focal_loss(city_probs, city_targets, params.city),
        focal_loss(country_probs, country_targets, params.country),
        params.beta,
    )


def combined_loss_from_logits(city_logits, country_logits, city_targets, country_targets,
                              params: CombinedParams = CombinedParams()) -> torch.Tensor:
    if country_logits is None:
        return focal_loss_from_logits(city_logits, city_targets, params.city)
    if city_logits.shape[0] != country_logits.shape[0]:
        raise BatchSizeMismatch("city and country batches differ in size")
    return combine(
        focal_loss_from_logits(city_logits, city_targets, params.city),
        focal_loss_from_logits(country_logits, country_targets, params.country),
        params.beta,
    )
