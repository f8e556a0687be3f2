"""Adapted NARM: time-space step embeddings, self-attention pre-layer,
GRU encoder with NARM global/local attention, bypass features and a
two-headed (city, country) decoder."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn

from .dataset import MASK_ID, PAD_ID
from .errors import AllPadInput, ShapeMismatch, UnknownCityId

MAX_DURATION_BUCKET = 22
N_DURATION_BUCKETS = MAX_DURATION_BUCKET + 2  # 0..22 plus one overflow bucket
N_MONTH_IDS = 13  # 0 is padding


@dataclass(frozen=True)
class ModelConfig:
    n_city_ids: int
    n_country_ids: int
    embedding_dim: int = 50
    month_dim: int = 25
    duration_dim: int = 25
    hidden_size: int = 100
    n_step_features: int = 0
    n_bypass_features: int = 0
    n_devices: int = 0
    n_bookers: int = 0
    category_dim: int = 50
    use_time: bool = True
    use_self_attention: bool = False
    multitask: bool = True
    dropout: float = 0.25

    @property
    def step_dim(self) -> int:
        d = self.embedding_dim + self.n_step_features
        if self.use_time:
            d += self.month_dim + self.duration_dim
        return d

    @property
    def bypass_dim(self) -> int:
        d = self.n_bypass_features
        if self.n_devices:
            d += self.category_dim
        if self.n_bookers:
            d += self.category_dim
        return d

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class Batch:
    cities: torch.Tensor  # (B, W) long, right-padded with PAD_ID
    durations: torch.Tensor  # (B, W) long, days
    months: torch.Tensor  # (B,) long in 1..12
    step_features: torch.Tensor | None = None  # (B, W, S)
    bypass: torch.Tensor | None = None  # (B, D)
    devices: torch.Tensor | None = None  # (B,) long
    bookers: torch.Tensor | None = None
    city_targets: torch.Tensor | None = None
    country_targets: torch.Tensor | None = None

    def __len__(self):
        return self.cities.shape[0]

    @property
    def mask(self) -> torch.Tensor:
        return self.cities != PAD_ID

    def select(self, index) -> "Batch":
        return Batch(**{f.name: (None if getattr(self, f.name) is None else getattr(self, f.name)[index])
                        for f in fields(self)})

    def to(self, dtype: torch.dtype) -> "Batch":
        """Cast the float tensors."""
        def cast(t):
            return None if t is None else t.to(dtype)
        return Batch(self.cities, self.durations, self.months, cast(self.step_features), cast(self.bypass),
                     self.devices, self.bookers, self.city_targets, self.country_targets)


class DualHeadOutput(NamedTuple):
    city_scores: torch.Tensor
    country_scores: torch.Tensor | None


class SessionRepresentation(NamedTuple):
    c_global: torch.Tensor
    c_local: torch.Tensor
    bypass: torch.Tensor | None
    attention: torch.Tensor


def duration_bucket(days: torch.Tensor) -> torch.Tensor:
    return days.clamp(0, MAX_DURATION_BUCKET + 1)


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return torch.softmax(scores.masked_fill(~mask, float("-inf")), dim=dim)


class SelfAttention(nn.Module):
    """Single-head scaled dot-product attention with a residual connection."""

    def __init__(self, dim: int):
        super().__init__()
        self.query = nn.Linear(dim, dim)
        self.key = nn.Linear(dim, dim, bias=False)  # a key bias only shifts each softmax row
        self.value = nn.Linear(dim, dim)
        self.scale = 1.0 / math.sqrt(dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor):
        scores = self.query(x) @ self.key(x).transpose(1, 2) * self.scale
        weights = masked_softmax(scores, mask[:, None, :])
        out = (x + weights @ self.value(x)) * mask[..., None]
        return out, weights


class SessionModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = cfg = config
        self.city_embedding = nn.Embedding(cfg.n_city_ids, cfg.embedding_dim, padding_idx=PAD_ID)
        if cfg.use_time:
            self.month_embedding = nn.Embedding(N_MONTH_IDS, cfg.month_dim, padding_idx=0)
            self.duration_embedding = nn.Embedding(N_DURATION_BUCKETS, cfg.duration_dim)
        self.self_attention = SelfAttention(cfg.step_dim) if cfg.use_self_attention else None
        self.dropout = nn.Dropout(cfg.dropout)

        H = cfg.hidden_size
        self.gru = nn.GRU(cfg.step_dim, H, batch_first=True)
        self.attn_global = nn.Linear(H, H, bias=False)
        self.attn_local = nn.Linear(H, H, bias=False)
        self.attn_v = nn.Linear(H, 1, bias=False)

        self.device_embedding = nn.Embedding(cfg.n_devices, cfg.category_dim) if cfg.n_devices else None
        self.booker_embedding = nn.Embedding(cfg.n_bookers, cfg.category_dim) if cfg.n_bookers else None
        rep_dim = 2 * H + cfg.bypass_dim
        self.city_projection = nn.Linear(rep_dim, cfg.embedding_dim, bias=False)
        self.country_head = nn.Linear(rep_dim, cfg.n_country_ids) if cfg.multitask else None

    # -- pieces -----------------------------------------------------------

    def embed_steps(self, cities, durations=None, months=None, step_features=None) -> torch.Tensor:
        """(B, W) ids -> (B, W, step_dim); pad positions are zero vectors."""
        cfg = self.config
        if cities.ndim != 2:
            raise ShapeMismatch(f"cities must be (batch, window), got {tuple(cities.shape)}")
        if cities.numel() and (cities.min() < 0 or cities.max() >= cfg.n_city_ids):
            raise UnknownCityId("city id outside the vocabulary")
        mask = (cities != PAD_ID)
        parts = [self.city_embedding(cities)]
        if cfg.use_time:
            if durations is None or months is None:
                raise ShapeMismatch("time modeling needs durations and months")
            if durations.shape != cities.shape:
                raise ShapeMismatch("durations must match cities")
            if months.ndim == 1:
                months = months[:, None].expand_as(cities)
            parts.append(self.month_embedding(months * mask))
            parts.append(self.duration_embedding(duration_bucket(durations)))
        if cfg.n_step_features:
            if step_features is None or step_features.shape[:2] != cities.shape \
                    or step_features.shape[2] != cfg.n_step_features:
                raise ShapeMismatch("step features must be (batch, window, n_step_features)")
            parts.append(step_features)
        x = torch.cat(parts, dim=-1) if len(parts) > 1 else parts[0]
        return x * mask[..., None].to(x.dtype)

    def self_attend(self, steps: torch.Tensor, mask: torch.Tensor):
        if not mask.any(dim=1).all():
            raise AllPadInput("every sequence needs at least one non-pad step")
        return self.self_attention(steps, mask)

    def encode_session(self, steps: torch.Tensor, mask: torch.Tensor):
        """Returns (c_global, c_local, alpha) from right-padded step vectors."""
        lengths = mask.sum(dim=1)
        if (lengths == 0).any():
            raise AllPadInput("every sequence needs at least one non-pad step")
        h, _ = self.gru(steps)
        last = h[torch.arange(h.shape[0]), lengths - 1]
        energy = self.attn_v(torch.sigmoid(self.attn_global(last)[:, None, :] + self.attn_local(h))).squeeze(-1)
        alpha = masked_softmax(energy, mask)
        c_local = (alpha[..., None] * h).sum(dim=1)
        return last, c_local, alpha

    def bypass_vector(self, batch: Batch) -> torch.Tensor | None:
        parts = []
        if self.config.n_bypass_features:
            if batch.bypass is None or batch.bypass.shape[1] != self.config.n_bypass_features:
                raise ShapeMismatch("bypass features missing or mis-sized")
            parts.append(batch.bypass)
        if self.device_embedding is not None:
            parts.append(self.device_embedding(batch.devices))
        if self.booker_embedding is not None:
            parts.append(self.booker_embedding(batch.bookers))
        return torch.cat(parts, dim=1) if parts else None

    def decode(self, rep: SessionRepresentation) -> DualHeadOutput:
        parts = [rep.c_global, rep.c_local] + ([rep.bypass] if rep.bypass is not None else [])
        x = self.dropout(torch.cat(parts, dim=1))
        city = self.city_projection(x) @ self.city_embedding.weight.T
        city = city.index_fill(1, torch.tensor([PAD_ID, MASK_ID]), float("-inf"))
        country = None
        if self.country_head is not None:
            country = self.country_head(x).index_fill(1, torch.tensor([PAD_ID, MASK_ID]), float("-inf"))
        return DualHeadOutput(city, country)

    # -- full pass --------------------------------------------------------

    def represent(self, batch: Batch) -> SessionRepresentation:
        mask = batch.mask
        steps = self.embed_steps(batch.cities, batch.durations, batch.months, batch.step_features)
        if self.self_attention is not None:
            steps, _ = self.self_attend(steps, mask)
        steps = self.dropout(steps)
        c_global, c_local, alpha = self.encode_session(steps, mask)
        return SessionRepresentation(c_global, c_local, self.bypass_vector(batch), alpha)

    def forward(self, batch: Batch) -> DualHeadOutput:
        return self.decode(self.represent(batch))

    @torch.no_grad()
    def top_k(self, batch: Batch, k: int = 4) -> torch.Tensor:
        was_training = self.training
        self.eval()
        scores = self(batch).city_scores
        self.train(was_training)
        k = min(k, self.config.n_city_ids - 2)
        return scores.topk(k, dim=1).indices


def city_log_probs(output: DualHeadOutput) -> torch.Tensor:
    return F.log_softmax(output.city_scores, dim=1)
