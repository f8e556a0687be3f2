"""Variant definitions and the trips -> samples -> tensor batches pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from . import features as fx
from .augmentation import PrefixSample, expand_prefixes
from .dataset import DEVICE_CLASSES, PAD_ID, Trip, Vocabulary
from .model import Batch, ModelConfig


@dataclass(frozen=True)
class VariantSpec:
    name: str
    use_time: bool
    multitask: bool
    loss: str  # "cross-entropy" | "focal"
    augment: bool  # prefix expansion + perturbations
    use_features: bool  # statistics, user embedding, bypass path
    use_self_attention: bool


VARIANTS = {
    "narm": VariantSpec("narm", False, False, "cross-entropy", False, False, False),
    "narm_v1": VariantSpec("narm_v1", True, True, "focal", True, False, False),
    "narm_v2": VariantSpec("narm_v2", True, True, "focal", True, True, True),
}


@dataclass(frozen=True, eq=False)
class TripFeatures:
    """Trip-level inputs shared by every prefix of one trip."""

    start_month: int
    user_vector: np.ndarray | None = None  # normalized user statistics
    user_embedding: np.ndarray | None = None
    device: int = 0
    booker: int = 0


def pad_window(ids: Sequence[int], window: int, pad=PAD_ID) -> list:
    """Keep the most recent ``window`` entries, right-pad to ``window``."""
    ids = list(ids)[-window:]
    return ids + [pad] * (window - len(ids))


def context_row(sample: PrefixSample) -> np.ndarray:
    month = sample.context.start_month if sample.context is not None else 1
    angle = 2 * np.pi * (month - 1) / 12.0
    return np.array([len(sample.prefix), float(sample.step_features[:, 0].sum()), np.sin(angle), np.cos(angle)])


def collate_basic(samples: Sequence[PrefixSample], window: int, vocab: Vocabulary) -> Batch:
    """Ids, durations, month and targets only."""
    n = len(samples)
    cities = np.zeros((n, window), dtype=np.int64)
    durations = np.zeros((n, window), dtype=np.int64)
    months = np.ones(n, dtype=np.int64)
    city_t = np.zeros(n, dtype=np.int64)
    country_t = np.zeros(n, dtype=np.int64)
    for i, s in enumerate(samples):
        ids = vocab.encode_cities(s.prefix[-window:])
        cities[i, :len(ids)] = ids
        durations[i, :len(ids)] = s.step_features[-window:, 0]
        if s.context is not None:
            months[i] = s.context.start_month
        city_t[i] = vocab.encode_city(s.label_city)
        country_t[i] = vocab.encode_country(s.label_country)
    return Batch(
        cities=torch.from_numpy(cities),
        durations=torch.from_numpy(durations),
        months=torch.from_numpy(months),
        city_targets=torch.from_numpy(city_t),
        country_targets=torch.from_numpy(country_t),
    )


class FeaturePipeline:
    """Fits vocabulary-bound feature transforms on training trips.

    Training features use the training trips as their own history;
    evaluation features see training trips plus the visible parts of the
    trips being scored, always strictly before each trip starts.
    """

    def __init__(self, vocab: Vocabulary, variant: VariantSpec, window: int = 10,
                 extended: bool = True, autoencoder_epochs: int = 300, seed: int = 0,
                 default_month: int = 1):
        self.vocab = vocab
        self.variant = variant
        self.window = window
        self.extended = extended
        self.autoencoder_epochs = autoencoder_epochs
        self.seed = seed
        self.default_month = default_month
        self.train_trips: list[Trip] = []
        self.user_norm = self.step_norm = self.context_norm = None
        self.encoder: fx.UserEncoder | None = None
        self.devices = {d: i + 1 for i, d in enumerate(DEVICE_CLASSES)}
        self.bookers: dict[str, int] = {}

    # -- fitting ------------------------------------------------------------

    def fit(self, train_trips: Sequence[Trip]) -> "FeaturePipeline":
        self.train_trips = list(train_trips)
        if not self.variant.use_features:
            return self
        self.bookers = {b: i + 1 for i, b in enumerate(sorted({t.reservations[0].booker_country for t in train_trips}))}
        index = fx.UserIndex(self.train_trips)
        users = np.stack([self._user_row(index, t) for t in self.train_trips])
        self.user_norm = fx.fit_normalizer(users)
        self.encoder = fx.train_user_autoencoder(
            fx.apply_normalizer(self.user_norm, users), seed=self.seed, epochs=self.autoencoder_epochs)
        counts = fx.step_stat_matrix(self.train_trips, (r for t in self.train_trips for r in t.reservations))
        steps = np.vstack([fx.expand_step_features(c, self.extended) for c in counts.values()])
        self.step_norm = fx.fit_normalizer(steps)
        ctx = np.stack([context_row(s) for s in self.samples(self.train_trips, expand=True)])
        self.context_norm = fx.fit_normalizer(ctx)
        return self

    def _user_row(self, index: fx.UserIndex, trip: Trip) -> np.ndarray:
        stats = fx._stats_from_trips(index.prior_trips(trip.user_id, trip), trip, self.default_month)
        return stats.as_vector(self.extended)

    # -- sizes for the model --------------------------------------------------

    @property
    def n_step_features(self) -> int:
        if not self.variant.use_features:
            return 0
        return len(fx.column_names(fx.STEP_COLUMNS, self.extended))

    @property
    def n_bypass_features(self) -> int:
        if not self.variant.use_features:
            return 0
        return self.encoder.latent_dim + len(self.user_norm.mean) + len(fx.CONTEXT_COLUMNS)

    def model_config(self, **overrides) -> ModelConfig:
        v = self.variant
        kw = dict(
            n_city_ids=self.vocab.n_city_ids,
            n_country_ids=self.vocab.n_country_ids,
            n_step_features=self.n_step_features,
            n_bypass_features=self.n_bypass_features,
            n_devices=len(self.devices) + 1 if v.use_features else 0,
            n_bookers=len(self.bookers) + 1 if v.use_features else 0,
            use_time=v.use_time,
            use_self_attention=v.use_self_attention,
            multitask=v.multitask,
        )
        kw.update(overrides)
        return ModelConfig(**kw)

    # -- samples --------------------------------------------------------------

    def trip_features(self, trips: Sequence[Trip], history: Sequence[Trip] | None = None):
        """Per-trip (step feature matrix, TripFeatures).

        ``history`` defaults to ``trips`` themselves (training); pass the
        training trips when featurizing held-out trips.
        """
        out = {}
        if not self.variant.use_features:
            for t in trips:
                stays = np.array([[r.stay_days] for r in t.reservations], dtype=np.float64)
                out[t.trip_id] = (stays, TripFeatures(t.start_month))
            return out
        own = history is None
        history = list(trips) if own else list(history)
        events = [r for t in history for r in t.reservations]
        if not own:
            events += [r for t in trips for r in t.reservations]
        counts = fx.step_stat_matrix(trips, events)
        index = fx.UserIndex(history)
        users = np.stack([self._user_row(index, t) for t in trips]) if trips else np.zeros((0, 1))
        users = fx.apply_normalizer(self.user_norm, users)
        emb = self.encoder.encode(users) if len(users) else users
        for i, t in enumerate(trips):
            steps = fx.apply_normalizer(self.step_norm, fx.expand_step_features(counts[t.trip_id], self.extended))
            stays = np.array([[r.stay_days] for r in t.reservations], dtype=np.float64)
            first = t.reservations[0]
            out[t.trip_id] = (
                np.hstack([stays, steps]),
                TripFeatures(t.start_month, users[i], emb[i], self.devices.get(first.device_class, 0),
                             self.bookers.get(first.booker_country, 0)),
            )
        return out

    def samples(self, trips: Sequence[Trip], expand: bool, history: Sequence[Trip] | None = None) -> list[PrefixSample]:
        """Training samples: every prefix when ``expand``, else only the final step."""
        feats = self.trip_features(trips, history)
        out = []
        for t in trips:
            if len(t) < 2:
                continue
            steps, ctx = feats[t.trip_id]
            expanded = expand_prefixes(t, steps, ctx)
            out.extend(expanded if expand else expanded[-1:])
        return out

    def query_samples(self, visible: Sequence[Trip], truths: Sequence[tuple[str, str]] | None = None) -> list[PrefixSample]:
        """One sample per visible (final-city-hidden) trip, featurized against training history."""
        feats = self.trip_features(visible, history=self.train_trips)
        out = []
        for i, t in enumerate(visible):
            steps, ctx = feats[t.trip_id]
            city, country = truths[i] if truths is not None else ("", "")
            out.append(PrefixSample(t.trip_id, tuple(t.cities), city, country, steps, ctx))
        return out

    # -- batches --------------------------------------------------------------

    def collate(self, samples: Sequence[PrefixSample], window: int | None = None) -> Batch:
        window = window or self.window
        batch = collate_basic(samples, window, self.vocab)
        if not self.variant.use_features:
            return batch
        n, s_dim = len(samples), self.n_step_features
        steps = np.zeros((n, window, s_dim), dtype=np.float32)
        bypass = np.zeros((n, self.n_bypass_features), dtype=np.float32)
        devices = np.zeros(n, dtype=np.int64)
        bookers = np.zeros(n, dtype=np.int64)
        ctx_rows = np.stack([context_row(s) for s in samples])
        ctx_rows = fx.apply_normalizer(self.context_norm, ctx_rows)
        for i, s in enumerate(samples):
            f = s.step_features[-window:, 1:]
            steps[i, :len(f)] = f
            c = s.context
            bypass[i] = np.concatenate([c.user_embedding, c.user_vector, ctx_rows[i]])
            devices[i] = c.device
            bookers[i] = c.booker
        batch.step_features = torch.from_numpy(steps)
        batch.bypass = torch.from_numpy(bypass)
        batch.devices = torch.from_numpy(devices)
        batch.bookers = torch.from_numpy(bookers)
        return batch

    # -- persistence ------------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        if not self.variant.use_features:
            return {}
        arrays = {}
        for name, norm in (("user_norm", self.user_norm), ("step_norm", self.step_norm), ("context_norm", self.context_norm)):
            for k, v in norm.to_dict().items():
                arrays[f"{name}.{k}"] = np.asarray(v)
        for k, v in self.encoder.state_dict().items():
            arrays[f"user_encoder.{k}"] = v.numpy()
        arrays["bookers"] = np.array(sorted(self.bookers, key=self.bookers.get), dtype=str)
        return arrays

    def load_state_arrays(self, arrays, train_trips: Sequence[Trip], encoder_dims: tuple[int, int, int] | None = None):
        self.train_trips = list(train_trips)
        if not self.variant.use_features:
            return self
        for name in ("user_norm", "step_norm", "context_norm"):
            setattr(self, name, fx.NormalizationStats(
                arrays[f"{name}.mean"], arrays[f"{name}.std"], arrays[f"{name}.constant"].astype(bool)))
        in_dim, latent, hidden = encoder_dims
        self.encoder = fx.UserEncoder(in_dim, latent, hidden)
        self.encoder.load_state_dict({k.split(".", 1)[1]: torch.from_numpy(np.asarray(v))
                                      for k, v in arrays.items() if k.startswith("user_encoder.")})
        self.encoder.eval()
        self.bookers = {b: i + 1 for i, b in enumerate(arrays["bookers"].tolist())}
        return self
