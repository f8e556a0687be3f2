"""User and city statistics, dense-feature normalization, user autoencoder.

Feature column order is fixed by ``USER_COLUMNS``, ``STEP_COLUMNS`` and
``CONTEXT_COLUMNS``; entries flagged ``extended`` are derived variants
(log counts, ratios, one-hots) and can be switched off.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

from .dataset import DEVICE_CLASSES, Reservation, Trip, TripDataset
from .errors import DimensionMismatch, InsufficientData, OutOfOrderEvent, UnknownUser

STD_FLOOR = 1e-8
LATENT_DIM = 100


@dataclass(frozen=True)
class Column:
    name: str
    extended: bool = False


USER_COLUMNS: tuple[Column, ...] = (
    Column("n_trips"),
    Column("n_cities_visited"),
    Column("avg_unique_cities_per_trip"),
    Column("avg_trip_size"),
    Column("avg_trip_duration_days"),
    Column("n_unique_cities"),
    Column("n_unique_countries"),
    Column("log1p_n_trips", True),
    Column("log1p_n_cities_visited", True),
    Column("log1p_n_unique_cities", True),
    Column("log1p_n_unique_countries", True),
    Column("countries_per_city", True),
    *(Column(f"month_{m:02d}", True) for m in range(1, 13)),
    *(Column(f"device_{d}", True) for d in DEVICE_CLASSES),
)

STEP_COLUMNS: tuple[Column, ...] = (
    Column("city_global_prior_count"),
    Column("city_user_prior_count"),
    Column("city_in_trip_count"),
    Column("country_global_prior_count"),
    Column("country_user_prior_count"),
    Column("log1p_city_global_prior_count", True),
    Column("log1p_city_user_prior_count", True),
    Column("log1p_city_in_trip_count", True),
    Column("log1p_country_global_prior_count", True),
    Column("log1p_country_user_prior_count", True),
    Column("step_position", True),
)

# per-prefix trip context, computed from the (possibly perturbed) prefix
CONTEXT_COLUMNS: tuple[Column, ...] = (
    Column("prefix_length", True),
    Column("elapsed_days", True),
    Column("start_month_sin", True),
    Column("start_month_cos", True),
)


def column_names(columns: Sequence[Column], extended: bool = True) -> list[str]:
    return [c.name for c in columns if extended or not c.extended]


def column_mask(columns: Sequence[Column], extended: bool = True) -> np.ndarray:
    return np.array([extended or not c.extended for c in columns])


@dataclass(frozen=True)
class UserStats:
    n_trips: int = 0
    n_cities_visited: int = 0
    avg_unique_cities_per_trip: float = 0.0
    avg_trip_size: float = 0.0
    avg_trip_duration_days: float = 0.0
    most_frequent_month: int = 1
    n_unique_cities: int = 0
    n_unique_countries: int = 0
    device_class: str = "desktop"
    booker_country: str = ""

    def as_vector(self, extended: bool = True) -> np.ndarray:
        base = [
            self.n_trips,
            self.n_cities_visited,
            self.avg_unique_cities_per_trip,
            self.avg_trip_size,
            self.avg_trip_duration_days,
            self.n_unique_cities,
            self.n_unique_countries,
        ]
        if not extended:
            return np.asarray(base, dtype=np.float64)
        month = [0.0] * 12
        month[self.most_frequent_month - 1] = 1.0
        device = [float(self.device_class == d) for d in DEVICE_CLASSES]
        ext = [
            math.log1p(self.n_trips),
            math.log1p(self.n_cities_visited),
            math.log1p(self.n_unique_cities),
            math.log1p(self.n_unique_countries),
            self.n_unique_countries / self.n_unique_cities if self.n_unique_cities else 0.0,
        ]
        return np.asarray(base + ext + month + device, dtype=np.float64)


class UserIndex:
    """Trips grouped per user, ordered by start date."""

    def __init__(self, trips: Iterable[Trip]):
        by_user: dict[str, list[Trip]] = defaultdict(list)
        for t in trips:
            by_user[t.user_id].append(t)
        self._trips = {u: sorted(ts, key=lambda t: (t.start, t.trip_id)) for u, ts in by_user.items()}
        self._ids = {t.trip_id: t for ts in self._trips.values() for t in ts}

    def __contains__(self, user_id):
        return user_id in self._trips

    def trip(self, trip_id: str) -> Trip:
        return self._ids[trip_id]

    def prior_trips(self, user_id: str, as_of: Trip) -> list[Trip]:
        """User trips whose every checkin precedes ``as_of``'s first checkin."""
        return [
            t for t in self._trips.get(user_id, ())
            if t.trip_id != as_of.trip_id and t.reservations[-1].checkin < as_of.start
        ]


def _stats_from_trips(prior: Sequence[Trip], as_of: Trip, default_month: int) -> UserStats:
    first = as_of.reservations[0]
    if not prior:
        return UserStats(most_frequent_month=default_month, device_class=first.device_class,
                         booker_country=first.booker_country)
    months = Counter(t.start_month for t in prior)
    top = max(months.values())
    cities = [c for t in prior for c in t.cities]
    return UserStats(
        n_trips=len(prior),
        n_cities_visited=len(cities),
        avg_unique_cities_per_trip=float(np.mean([len(set(t.cities)) for t in prior])),
        avg_trip_size=float(np.mean([len(t) for t in prior])),
        avg_trip_duration_days=float(np.mean([t.total_duration_days for t in prior])),
        most_frequent_month=min(m for m, c in months.items() if c == top),
        n_unique_cities=len(set(cities)),
        n_unique_countries=len({c for t in prior for c in t.countries}),
        device_class=first.device_class,
        booker_country=first.booker_country,
    )


def user_statistics(
    ds: TripDataset | UserIndex,
    user_id: str,
    as_of_trip: str | Trip,
    default_month: int = 1,
) -> UserStats:
    """Statistics over the user's trips that finished before ``as_of_trip`` began.

    Users without prior trips get zero counts and ``default_month``.
    Device and booker country come from the ``as_of_trip`` booking itself.
    """
    index = ds if isinstance(ds, UserIndex) else UserIndex(ds.trips)
    if user_id not in index:
        raise UnknownUser(user_id)
    as_of = index.trip(as_of_trip) if isinstance(as_of_trip, str) else as_of_trip
    return _stats_from_trips(index.prior_trips(user_id, as_of), as_of, default_month)


@dataclass(frozen=True)
class CityStepStats:
    city_global_prior_count: int = 0
    city_user_prior_count: int = 0
    city_in_trip_count: int = 0
    country_global_prior_count: int = 0
    country_user_prior_count: int = 0

    def as_tuple(self) -> tuple[int, ...]:
        return (self.city_global_prior_count, self.city_user_prior_count, self.city_in_trip_count,
                self.country_global_prior_count, self.country_user_prior_count)


def _event_key(r: Reservation):
    return (r.checkin, r.trip_id, r.step_index)


class CityCounter:
    """Streaming interaction counts with a monotone clock.

    Global and per-user counts include history events whose checkin is
    strictly before the active trip's first checkin; in-trip counts
    cover earlier steps of the active trip.
    """

    def __init__(self, history: Iterable[Reservation] = ()):
        self._events = sorted(history, key=_event_key)
        self._checkins = [e.checkin for e in self._events]
        self._pos = 0
        self.clock = None
        self.city = Counter()
        self.country = Counter()
        self.user_city = Counter()
        self.user_country = Counter()
        self.trip_id = None
        self.user_id = None
        self.in_trip = Counter()
        self._step_clock = None

    def begin_trip(self, trip_id: str, user_id: str, start) -> None:
        if self.clock is not None and start < self.clock:
            raise OutOfOrderEvent(f"trip {trip_id} starts {start}, clock is at {self.clock}")
        stop = bisect_left(self._checkins, start, lo=self._pos)
        for e in self._events[self._pos:stop]:
            self.city[e.city_id] += 1
            self.country[e.country_id] += 1
            self.user_city[e.user_id, e.city_id] += 1
            self.user_country[e.user_id, e.country_id] += 1
        self._pos = stop
        self.clock = start
        self.trip_id, self.user_id = trip_id, user_id
        self.in_trip = Counter()
        self._step_clock = start

    def step(self, r: Reservation) -> CityStepStats:
        if self.trip_id != r.trip_id:
            self.begin_trip(r.trip_id, r.user_id, r.checkin)
        elif r.checkin < self._step_clock:
            raise OutOfOrderEvent(f"{r.trip_id} step {r.step_index} predates {self._step_clock}")
        out = CityStepStats(
            self.city[r.city_id],
            self.user_city[r.user_id, r.city_id],
            self.in_trip[r.city_id],
            self.country[r.country_id],
            self.user_country[r.user_id, r.country_id],
        )
        self.in_trip[r.city_id] += 1
        self._step_clock = r.checkin
        return out


def city_step_stats(counter_state: CityCounter, reservation: Reservation) -> CityStepStats:
    return counter_state.step(reservation)


def step_stat_matrix(trips: Sequence[Trip], history: Iterable[Reservation]) -> dict[str, np.ndarray]:
    """Per-trip (n_steps, 5) raw count matrices, one streaming pass in start order."""
    counter = CityCounter(history)
    out = {}
    for t in sorted(trips, key=lambda t: (t.start, t.trip_id)):
        counter.begin_trip(t.trip_id, t.user_id, t.start)
        out[t.trip_id] = np.array([counter.step(r).as_tuple() for r in t.reservations], dtype=np.float64)
    return out


def expand_step_features(counts: np.ndarray, extended: bool = True) -> np.ndarray:
    """Raw counts -> rows laid out as ``STEP_COLUMNS``."""
    if not extended:
        return counts.astype(np.float64)
    pos = np.arange(len(counts), dtype=np.float64)[:, None]
    return np.hstack([counts, np.log1p(counts), pos])


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "constant": self.constant}


def fit_normalizer(train_features) -> NormalizationStats:
    x = np.asarray(train_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a non-empty 2-D feature matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population convention
    constant = std < STD_FLOOR
    return NormalizationStats(mean, np.maximum(std, STD_FLOOR), constant)


def apply_normalizer(stats: NormalizationStats, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    z = (x - stats.mean) / stats.std
    z[..., stats.constant] = 0.0
    return z


class UserEncoder(nn.Module):
    """Tabular autoencoder: in -> hidden -> latent -> hidden -> in."""

    def __init__(self, input_dim: int, latent_dim: int = LATENT_DIM, hidden_dim: int = 128):
        super().__init__()
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        self.hidden_dim = hidden_dim
        self.encoder = nn.Sequential(nn.Linear(input_dim, hidden_dim), nn.Tanh(), nn.Linear(hidden_dim, latent_dim))
        self.decoder = nn.Sequential(nn.Linear(latent_dim, hidden_dim), nn.Tanh(), nn.Linear(hidden_dim, input_dim))
        self.heldout_mse = float("nan")
        self.baseline_mse = float("nan")

    def forward(self, x):
        return self.decoder(self.encoder(x))

    @torch.no_grad()
    def encode(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if x.shape[-1] != self.input_dim:
            raise DimensionMismatch(f"expected {self.input_dim} features, got {x.shape[-1]}")
        return self.encoder(torch.from_numpy(np.ascontiguousarray(x))).numpy().astype(np.float64)


def train_user_autoencoder(
    train_stats,
    latent_dim: int = LATENT_DIM,
    seed: int = 0,
    epochs: int = 600,
    lr: float = 3e-3,
    batch_size: int = 512,
    holdout_fraction: float = 0.1,
) -> UserEncoder:
    """Fit the autoencoder on normalized user rows.

    A seeded ``holdout_fraction`` of rows is kept out of training; the
    encoder's ``heldout_mse`` and ``baseline_mse`` (predicting the
    training column means) are measured on it.
    """
    x = np.asarray(train_stats, dtype=np.float32)
    if x.ndim != 2 or len(np.unique(x, axis=0)) < 2:
        raise InsufficientData("need at least two distinct rows")
    gen = torch.Generator().manual_seed(seed)
    order = torch.randperm(len(x), generator=gen).numpy()
    n_hold = max(1, int(round(holdout_fraction * len(x)))) if len(x) >= 10 else 0
    hold, fit = x[order[:n_hold]], x[order[n_hold:]]

    torch.manual_seed(seed)
    model = UserEncoder(x.shape[1], latent_dim, hidden_dim=max(128, 2 * x.shape[1]))
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    xt = torch.from_numpy(fit)
    for _ in range(epochs):
        perm = torch.randperm(len(xt), generator=gen)
        for i in range(0, len(xt), batch_size):
            xb = xt[perm[i:i + batch_size]]
            loss = ((model(xb) - xb) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
    model.eval()
    if n_hold:
        with torch.no_grad():
            ht = torch.from_numpy(hold)
            model.heldout_mse = float(((model(ht) - ht) ** 2).mean())
        model.baseline_mse = float(((hold - fit.mean(axis=0)) ** 2).mean())
    return model


def encode_user(encoder: UserEncoder, stats) -> np.ndarray:
    """Latent vector for one normalized user row (or a batch of rows)."""
    if isinstance(stats, UserStats):
        stats = stats.as_vector()
    return encoder.encode(stats)


def write_feature_matrix(path: str | Path, columns: Sequence[str], rows, index: Sequence[str] | None = None) -> None:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != len(columns):
        raise DimensionMismatch(f"{rows.shape} rows vs {len(columns)} columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["key"] if index is not None else []) + list(columns))
        for i, row in enumerate(rows):
            w.writerow(([index[i]] if index is not None else []) + [repr(float(v)) for v in row])
