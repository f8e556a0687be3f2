"""Batching, the optimization loop, early stopping."""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
import torch

from .augmentation import NO_PERTURBATION, PerturbationPolicy, PrefixSample, perturb_many
from .baselines import SimilarityIndex
from .errors import Divergence
from .losses import CROSS_ENTROPY, CombinedParams, FocalParams, combined_loss_from_logits
from .model import Batch, SessionModel
from .optim import RAdam
from .pipeline import collate_basic


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 64
    history_window: int = 10
    early_stop_patience: int = 10
    max_epochs: int = 200
    seed: int = 0
    optimizer: str = "radam"
    loss: str = "focal"  # or "cross-entropy"
    focal_alpha: float = 1.0
    focal_gamma: float = 3.0
    beta: float = 0.5
    grad_clip_norm: float | None = 5.0
    eval_batch_size: int = 512

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "history_window", "early_stop_patience", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.optimizer != "radam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.loss not in ("focal", "cross-entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def loss_params(self) -> CombinedParams:
        fp = CROSS_ENTROPY if self.loss == "cross-entropy" else FocalParams(self.focal_alpha, self.focal_gamma)
        return CombinedParams(self.beta, fp, fp)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc4: float
    wall_seconds: float = field(default=0.0, compare=False)

    def metrics_line(self) -> str:
        # wall time is kept out so the file is reproducible byte for byte
        return json.dumps({"epoch": self.epoch, "train_loss": self.train_loss,
                           "val_loss": self.val_loss, "val_acc4": self.val_acc4})


@dataclass
class TrainedModel:
    model: SessionModel
    config: TrainConfig
    vocab_hash: str
    best_epoch: int
    best_validation_acc4: float
    history: list[EpochRecord]
    stopped_epoch: int


def make_batches(
    samples: Sequence[PrefixSample],
    window: int,
    batch_size: int,
    seed: int,
    epoch: int = 0,
    shuffle: bool = True,
    vocab=None,
    collate: Callable[[Sequence[PrefixSample], int], Batch] | None = None,
) -> Iterator[Batch]:
    """Shuffled (per seed and epoch) fixed-size batches, last one ragged."""
    if not samples:
        raise ValueError("no samples to batch")
    if collate is None:
        def collate(chunk, w):
            return collate_basic(chunk, w, vocab)
    order = np.random.default_rng([seed, epoch]).permutation(len(samples)) if shuffle else np.arange(len(samples))
    for i in range(0, len(samples), batch_size):
        yield collate([samples[j] for j in order[i:i + batch_size]], window)


class EarlyStopping:
    """Stop after ``patience`` epochs without a strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record a score; True when it is a new best."""
        if value > self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@torch.no_grad()
def evaluate_samples(model: SessionModel, samples: Sequence[PrefixSample], collate, window: int,
                     loss_params: CombinedParams, batch_size: int = 512, k: int = 4) -> tuple[float, float]:
    """(mean loss, Acc@k) over samples in inference mode."""
    was_training = model.training
    model.eval()
    total_loss, hits = 0.0, 0
    for i in range(0, len(samples), batch_size):
        batch = collate(samples[i:i + batch_size], window)
        out = model(batch)
        loss = combined_loss_from_logits(out.city_scores, out.country_scores, batch.city_targets,
                                         batch.country_targets, loss_params)
        total_loss += float(loss) * len(batch)
        top = out.city_scores.topk(min(k, out.city_scores.shape[1] - 2), dim=1).indices
        hits += int((top == batch.city_targets[:, None]).any(dim=1).sum())
    model.train(was_training)
    return total_loss / len(samples), hits / len(samples)


def train(
    model: SessionModel,
    train_samples: Sequence[PrefixSample],
    valid_samples: Sequence[PrefixSample],
    config: TrainConfig,
    collate,
    vocab_hash: str = "",
    policy: PerturbationPolicy = NO_PERTURBATION,
    similarity: SimilarityIndex | None = None,
    metrics_path: str | Path | None = None,
    timings_path: str | Path | None = None,
    log: Callable[[str], None] | None = None,
) -> TrainedModel:
    """Optimize until validation Acc@4 stalls for ``early_stop_patience`` epochs.

    Perturbations are redrawn every epoch. The returned model carries the
    weights of the best validation epoch.
    """
    torch.manual_seed(config.seed)
    loss_params = config.loss_params()
    opt = RAdam(list(model.parameters()), lr=config.learning_rate, weight_decay=config.weight_decay)
    stopper = EarlyStopping(config.early_stop_patience)
    best_state = copy.deepcopy(model.state_dict())
    last_finite = best_state
    history: list[EpochRecord] = []
    window = config.history_window
    for path in (metrics_path, timings_path):
        if path is not None:
            Path(path).write_text("")

    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        epoch_samples = train_samples
        if not policy.is_identity:
            epoch_samples = perturb_many(train_samples, policy, similarity,
                                         np.random.default_rng([config.seed, epoch, 1]))
        total, count = 0.0, 0
        for batch in make_batches(epoch_samples, window, config.batch_size, config.seed, epoch, collate=collate):
            out = model(batch)
            loss = combined_loss_from_logits(out.city_scores, out.country_scores, batch.city_targets,
                                             batch.country_targets, loss_params)
            if not torch.isfinite(loss):
                model.load_state_dict(last_finite)
                raise Divergence(epoch, last_finite)
            opt.zero_grad()
            loss.backward()
            if config.grad_clip_norm:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip_norm)
            opt.step()
            total += float(loss.detach()) * len(batch)
            count += len(batch)

        val_loss, val_acc = evaluate_samples(model, valid_samples, collate, window, loss_params,
                                             config.eval_batch_size)
        rec = EpochRecord(epoch, total / count, val_loss, val_acc, time.perf_counter() - t0)
        history.append(rec)
        if metrics_path is not None:
            with open(metrics_path, "a") as fh:
                fh.write(rec.metrics_line() + "\n")
        if timings_path is not None:
            with open(timings_path, "a") as fh:
                fh.write(json.dumps({"epoch": epoch, "wall_seconds": rec.wall_seconds}) + "\n")
        if log:
            log(f"epoch {epoch:3d} train_loss {rec.train_loss:.4f} val_loss {val_loss:.4f} "
                f"val_acc4 {val_acc:.4f} ({rec.wall_seconds:.1f}s)")
        last_finite = copy.deepcopy(model.state_dict())
        if stopper.update(epoch, val_acc):
            best_state = last_finite
        if stopper.should_stop:
            break

    model.load_state_dict(best_state)
    model.eval()
    return TrainedModel(model, config, vocab_hash, stopper.best_epoch, stopper.best, history, epoch)


def history_dicts(history: Sequence[EpochRecord]) -> list[dict]:
    return [asdict(r) for r in history]
