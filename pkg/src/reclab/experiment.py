"""End-to-end runs: data preparation, training, checkpoints, comparisons."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import features as fx
from .baselines import (CountryPopularity, ItemKNNRecommender, PopularityRecommender, SimilarityIndex,
                        fit_popularity, fit_similarity)
from .checkpoint import PARAM_PREFIX, check_vocab, load_archive, save_archive
from .config import RunConfig
from .dataset import TripDataset, Vocabulary, build_vocab, filter_trips, load_trips, split_by_trip
from .evaluation import MetricsReport, TripQuery, evaluate
from .model import ModelConfig, SessionModel
from .pipeline import VARIANTS, FeaturePipeline
from .synthetic import generate_synthetic
from .training import TrainedModel, train

log = logging.getLogger(__name__)

ALL_MODELS = ("popularity", "itemknn", "narm", "narm_v1", "narm_v2")


@dataclass
class PreparedData:
    full: TripDataset
    train: TripDataset  # fit + valid
    fit: TripDataset
    valid: TripDataset
    test: TripDataset
    vocab: Vocabulary


def load_dataset(cfg: RunConfig) -> TripDataset:
    d = cfg.data
    if d.source == "file":
        return load_trips(d.path, d.schema or None, d.delimiter)
    return generate_synthetic(d.synthetic_config(), d.seed)


def prepare_data(cfg: RunConfig, ds: TripDataset | None = None) -> PreparedData:
    d = cfg.data
    full = ds if ds is not None else load_dataset(cfg)
    train, test = split_by_trip(full, d.train_fraction, d.seed)
    bounds = dict(min_cities=d.min_cities, max_cities=d.max_cities, max_duration_days=d.max_duration_days)
    train = filter_trips(train, **bounds)
    if d.filter_eval:
        test = filter_trips(test, **bounds)
    fit, valid = split_by_trip(train, 1.0 - d.valid_fraction, d.seed + 1)
    return PreparedData(full, train, fit, valid, test, build_vocab(train))


class NarmRecommender:
    """Wraps a trained network and its feature pipeline for ``evaluate``."""

    def __init__(self, name: str, model: SessionModel, pipeline: FeaturePipeline, batch_size: int = 512):
        self.name = name
        self.model = model.eval()
        self.pipeline = pipeline
        self.batch_size = batch_size

    def input_windows(self, queries: Sequence[TripQuery]) -> list[list[str]]:
        w = self.pipeline.window
        return [list(q.visible.cities[-w:]) for q in queries]

    @torch.no_grad()
    def scores(self, queries: Sequence[TripQuery]) -> np.ndarray:
        samples = self.pipeline.query_samples([q.visible for q in queries])
        out = []
        for i in range(0, len(samples), self.batch_size):
            out.append(self.model(self.pipeline.collate(samples[i:i + self.batch_size])).city_scores.numpy())
        return np.concatenate(out) if out else np.zeros((0, self.pipeline.vocab.n_city_ids))

    def recommend(self, queries: Sequence[TripQuery], k: int = 4) -> list[list[str]]:
        if not queries:
            return []
        scores = torch.from_numpy(self.scores(queries))
        k = min(k, self.pipeline.vocab.city_count)
        top = scores.topk(k, dim=1).indices.numpy()
        id_to_city = self.pipeline.vocab.id_to_city
        return [[id_to_city[int(i)] for i in row] for row in top]


@dataclass
class VariantRun:
    trained: TrainedModel
    pipeline: FeaturePipeline
    recommender: NarmRecommender


def model_config_for(cfg: RunConfig, pipeline: FeaturePipeline) -> ModelConfig:
    m = cfg.model
    return pipeline.model_config(hidden_size=m.hidden_size, embedding_dim=m.embedding_dim, month_dim=m.month_dim,
                                 duration_dim=m.duration_dim, category_dim=m.category_dim, dropout=m.dropout)


def train_variant(cfg: RunConfig, data: PreparedData, variant: str | None = None,
                  similarity: SimilarityIndex | None = None, out_dir: str | Path | None = None) -> VariantRun:
    torch.set_num_threads(1)
    variant = variant or cfg.model.variant
    spec = VARIANTS[variant]
    tcfg = cfg.training
    if spec.loss != tcfg.loss:
        tcfg = dataclasses.replace(tcfg, loss=spec.loss)
    pipeline = FeaturePipeline(data.vocab, spec, tcfg.history_window, cfg.model.extended_features,
                               cfg.model.autoencoder_epochs, tcfg.seed).fit(data.fit.trips)
    min_len = max(cfg.augmentation.min_trip_len, 2) if spec.augment else 2
    train_trips = [t for t in data.fit.trips if len(t) >= min_len]
    train_samples = pipeline.samples(train_trips, expand=spec.augment)
    valid_visible = [t.head(len(t) - 1) for t in data.valid.trips if len(t) >= 2]
    valid_truth = [(t.cities[-1], t.countries[-1]) for t in data.valid.trips if len(t) >= 2]
    valid_samples = pipeline.query_samples(valid_visible, valid_truth)

    policy = cfg.augmentation.policy(tcfg.seed)
    if not spec.augment:
        policy = dataclasses.replace(policy, p_drop=0.0, p_mask=0.0, p_substitute=0.0, p_none=1.0)
    elif similarity is None and policy.p_substitute > 0:
        similarity = fit_similarity(data.fit, cfg.augmentation.substitute_top_k)

    torch.manual_seed(tcfg.seed)
    model = SessionModel(model_config_for(cfg, pipeline))
    metrics_path = timings_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        metrics_path = out_dir / cfg.output.metrics_file
        timings_path = out_dir / cfg.output.timings_file
    log.info("training %s on %d samples (%d valid)", variant, len(train_samples), len(valid_samples))
    trained = train(model, train_samples, valid_samples, tcfg, pipeline.collate, data.vocab.digest(), policy,
                    similarity, metrics_path, timings_path, log=log.info)
    return VariantRun(trained, pipeline, NarmRecommender(variant, trained.model, pipeline))


def save_model_checkpoint(path: str | Path, run: VariantRun, cfg: RunConfig, data_hash: str = "") -> None:
    p = run.pipeline
    manifest = {
        "type": "model",
        "variant": p.variant.name,
        "model_config": run.trained.model.config.to_dict(),
        "vocab_hash": p.vocab.digest(),
        "vocab": p.vocab.to_dict(),
        "train_config": dataclasses.asdict(run.trained.config),
        "best_epoch": run.trained.best_epoch,
        "best_validation_acc4": run.trained.best_validation_acc4,
        "window": p.window,
        "extended_features": p.extended,
        "data_hash": data_hash,
        "config_hash": cfg.digest(),
    }
    if p.encoder is not None:
        manifest["encoder_dims"] = [p.encoder.input_dim, p.encoder.latent_dim, p.encoder.hidden_dim]
    arrays = {PARAM_PREFIX + k: v.detach().numpy() for k, v in run.trained.model.state_dict().items()}
    arrays.update({"pipeline." + k: v for k, v in p.state_arrays().items()})
    save_archive(path, manifest, arrays)


def load_model_checkpoint(path: str | Path, data: PreparedData) -> NarmRecommender:
    manifest, arrays = load_archive(path)
    if manifest.get("type") != "model":
        raise ValueError(f"{path} is not a model checkpoint")
    check_vocab(manifest, data.vocab.digest())
    spec = VARIANTS[manifest["variant"]]
    model = SessionModel(ModelConfig.from_dict(manifest["model_config"]))
    model.load_state_dict({k[len(PARAM_PREFIX):]: torch.from_numpy(np.asarray(v))
                           for k, v in arrays.items() if k.startswith(PARAM_PREFIX)})
    pipeline = FeaturePipeline(data.vocab, spec, manifest["window"], manifest["extended_features"])
    pipeline.load_state_arrays({k[len("pipeline."):]: v for k, v in arrays.items() if k.startswith("pipeline.")},
                               data.fit.trips, tuple(manifest["encoder_dims"]) if "encoder_dims" in manifest else None)
    return NarmRecommender(spec.name, model, pipeline)


def save_baselines(path: str | Path, popularity: CountryPopularity, similarity: SimilarityIndex, vocab_hash: str) -> None:
    arrays = {f"popularity.{k}": v for k, v in popularity.to_arrays().items()}
    arrays.update({f"similarity.{k}": v for k, v in similarity.to_arrays().items()})
    save_archive(path, {"type": "baseline", "vocab_hash": vocab_hash}, arrays)


def load_baselines(path: str | Path) -> tuple[CountryPopularity, SimilarityIndex]:
    manifest, arrays = load_archive(path)
    if manifest.get("type") != "baseline":
        raise ValueError(f"{path} is not a baseline archive")
    pop = CountryPopularity.from_arrays({k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith("popularity.")})
    sim = SimilarityIndex.from_arrays({k.split(".", 1)[1]: v for k, v in arrays.items() if k.startswith("similarity.")})
    return pop, sim


def fit_baselines(cfg: RunConfig, data: PreparedData) -> tuple[CountryPopularity, SimilarityIndex]:
    b = cfg.baselines
    pop = fit_popularity(data.train, final_only=b.popularity_final_only)
    sim = fit_similarity(data.train, b.similarity_top_k, b.similarity_weighted)
    return pop, sim


def run_comparison(cfg: RunConfig, models: Sequence[str] = ALL_MODELS, data: PreparedData | None = None,
                   out_dir: str | Path | None = None) -> tuple[list[MetricsReport], dict[str, VariantRun]]:
    """Fit/train every requested model and evaluate each on the test split."""
    data = data or prepare_data(cfg)
    pop, sim = fit_baselines(cfg, data)
    reports, runs = [], {}
    seed, chash = cfg.training.seed, cfg.digest()
    for name in models:
        if name == "popularity":
            rec = PopularityRecommender(pop)
        elif name == "itemknn":
            rec = ItemKNNRecommender(sim, pop, cfg.baselines.itemknn_exclude_visited)
        else:
            sub = None
            if out_dir is not None:
                sub = Path(out_dir) / name
                sub.mkdir(parents=True, exist_ok=True)
            runs[name] = train_variant(cfg, data, name, out_dir=sub)
            rec = runs[name].recommender
        reports.append(evaluate(rec, data.test, 4, name, chash, seed))
        log.info("%s acc@4 %.4f", name, reports[-1].acc_at_4)
    return reports, runs


def user_profiles(trips: Sequence, max_users: int | None = None, extended: bool = True):
    """(user ids, raw stat rows, most frequent month) over each user's full history."""
    by_user: dict[str, list] = {}
    for t in sorted(trips, key=lambda t: (t.start, t.trip_id)):
        by_user.setdefault(t.user_id, []).append(t)
    users = sorted(by_user)[:max_users] if max_users else sorted(by_user)
    rows, months = [], []
    for u in users:
        ts = by_user[u]
        stats = fx._stats_from_trips(ts, ts[-1], 1)
        rows.append(stats.as_vector(extended))
        months.append(stats.most_frequent_month)
    return users, np.stack(rows), np.array(months)
