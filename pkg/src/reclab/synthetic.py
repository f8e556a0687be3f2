"""Seeded synthetic trip worlds.

Generative process
------------------
1. Cities are dealt round-robin (after a seeded shuffle) into countries.
   Every city gets a Zipf popularity weight; ``popularity`` is the
   normalized vector.
2. Each city ``a`` gets ``n_successors`` preferred next cities, mostly in
   its own country, with Dirichlet weights ``S[a]``. The route graph is
   ``T[a] = (1 - r) * popularity + r * S[a]``, so ``r`` (route strength)
   controls how concentrated transitions are.
3. Each city has a peak month. For a trip starting in month ``m`` the
   seasonal reweighting is ``g(m)[c] = exp(k * cos(2pi (m - peak_c) / 12))``.
4. A trip's first city is drawn from ``popularity``; intermediate cities
   from ``T[prev]``; the final city from
   ``(1 - s) * T[prev] + s * normalize(T[prev] * g(m))`` with ``s`` the
   seasonality strength.
5. Stay lengths are geometric per city, truncated to ``1..max_stay_days``;
   reservations are back to back.

With ``r = s = 0`` every city is an i.i.d. draw from ``popularity``.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import DEVICE_CLASSES, Reservation, Trip, TripDataset
from .errors import InvalidConfig

DEFAULT_LENGTH_WEIGHTS = (0.30, 0.24, 0.17, 0.12, 0.08, 0.05, 0.04)  # lengths 4..10


@dataclass(frozen=True)
class SyntheticConfig:
    n_users: int = 15000
    n_trips: int = 20000
    n_cities: int = 200
    n_countries: int = 10
    length_weights: tuple[float, ...] = DEFAULT_LENGTH_WEIGHTS
    seasonality: float = 0.5
    route_strength: float = 0.9
    zipf_exponent: float = 1.0
    n_successors: int = 3
    same_country_prob: float = 0.85
    season_sharpness: float = 2.0
    preferred_month_prob: float = 0.6
    max_stay_days: int = 7
    n_booker_countries: int = 5
    start_year: int = 2016

    def validate(self) -> None:
        for name in ("n_users", "n_trips", "n_cities", "n_countries", "n_successors",
                     "max_stay_days", "n_booker_countries"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.n_cities < self.n_countries:
            raise InvalidConfig("need at least one city per country")
        if self.n_successors >= self.n_cities:
            raise InvalidConfig("n_successors must be below n_cities")
        for name in ("seasonality", "route_strength", "same_country_prob", "preferred_month_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{name}={v} outside [0, 1]")
        w = np.asarray(self.length_weights, dtype=float)
        if len(w) != 7 or (w < 0).any() or w.sum() <= 0:
            raise InvalidConfig("length_weights needs 7 nonnegative weights for lengths 4..10")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["length_weights"] = list(self.length_weights)
        return d


@dataclass
class SyntheticWorld:
    """The sampling distributions behind a generated dataset."""

    config: SyntheticConfig
    city_names: list[str]
    country_names: list[str]
    city_country: np.ndarray  # city index -> country index
    popularity: np.ndarray
    transitions: np.ndarray  # (n_cities, n_cities), rows sum to 1
    peak_month: np.ndarray  # 1..12
    stay_p: np.ndarray  # geometric success probability per city
    extra: dict = field(default_factory=dict)

    def season_weights(self, month: int) -> np.ndarray:
        k = self.config.season_sharpness
        return np.exp(k * np.cos(2 * np.pi * (month - self.peak_month) / 12.0))

    def final_distribution(self, prev: int, month: int) -> np.ndarray:
        s = self.config.seasonality
        row = self.transitions[prev]
        seasonal = row * self.season_weights(month)
        seasonal = seasonal / seasonal.sum()
        return (1 - s) * row + s * seasonal


def build_world(config: SyntheticConfig, seed: int) -> SyntheticWorld:
    config.validate()
    rng = np.random.default_rng([seed, 0])
    n, k = config.n_cities, config.n_countries
    city_names = [f"city_{i:04d}" for i in range(n)]
    country_names = [f"country_{j:02d}" for j in range(k)]
    city_country = np.empty(n, dtype=int)
    city_country[rng.permutation(n)] = np.arange(n) % k

    ranks = rng.permutation(n) + 1
    popularity = ranks.astype(float) ** -config.zipf_exponent
    popularity /= popularity.sum()

    succ = np.zeros((n, n))
    for a in range(n):
        chosen: list[int] = []
        while len(chosen) < config.n_successors:
            if rng.random() < config.same_country_prob:
                pool = np.flatnonzero(city_country == city_country[a])
            else:
                pool = np.arange(n)
            pool = pool[(pool != a) & ~np.isin(pool, chosen)]
            if pool.size == 0:
                pool = np.setdiff1d(np.arange(n), [a, *chosen])
            w = popularity[pool] / popularity[pool].sum()
            chosen.append(int(rng.choice(pool, p=w)))
        succ[a, chosen] = rng.dirichlet(np.ones(config.n_successors))
    r = config.route_strength
    transitions = (1 - r) * popularity[None, :] + r * succ

    peak_month = rng.integers(1, 13, size=n)
    stay_p = rng.uniform(0.3, 0.7, size=n)
    return SyntheticWorld(config, city_names, country_names, city_country, popularity,
                          transitions, peak_month, stay_p)


def _stay(rng: np.random.Generator, p: float, cap: int) -> int:
    # geometric on 1..cap by inverse CDF of the truncated law
    u = rng.random()
    tail = 1 - (1 - p) ** cap
    return int(min(cap, np.floor(np.log1p(-u * tail) / np.log1p(-p)) + 1))


def sample_trips(world: SyntheticWorld, seed: int) -> TripDataset:
    cfg = world.config
    rng = np.random.default_rng([seed, 1])
    n = cfg.n_cities
    cum_t = np.cumsum(world.transitions, axis=1)
    cum_pop = np.cumsum(world.popularity)

    def draw(cum: np.ndarray) -> int:
        return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), n - 1)

    user_month = rng.integers(1, 13, size=cfg.n_users)
    user_device = rng.choice(len(DEVICE_CLASSES), size=cfg.n_users, p=[0.5, 0.4, 0.1])
    user_booker = rng.integers(0, cfg.n_booker_countries, size=cfg.n_users)
    lengths = np.arange(4, 11)
    length_p = np.asarray(cfg.length_weights, float)
    length_p /= length_p.sum()

    width = len(str(cfg.n_trips))
    uwidth = len(str(cfg.n_users))
    trips = []
    for t in range(cfg.n_trips):
        u = t if t < cfg.n_users else int(rng.integers(cfg.n_users))
        if rng.random() < cfg.preferred_month_prob:
            month = int(user_month[u])
        else:
            month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 29))
        year = cfg.start_year + int(rng.integers(0, 2))
        size = int(rng.choice(lengths, p=length_p))

        path = [draw(cum_pop)]
        for step in range(1, size):
            prev = path[-1]
            if step == size - 1:
                path.append(draw(np.cumsum(world.final_distribution(prev, month))))
            else:
                path.append(draw(cum_t[prev]))

        user_id = f"user_{u:0{uwidth}d}"
        trip_id = f"trip_{t:0{width}d}"
        checkin = dt.date(year, month, day)
        rows = []
        for i, c in enumerate(path):
            checkout = checkin + dt.timedelta(days=_stay(rng, world.stay_p[c], cfg.max_stay_days))
            rows.append(Reservation(
                user_id=user_id,
                trip_id=trip_id,
                city_id=world.city_names[c],
                country_id=world.country_names[world.city_country[c]],
                checkin=checkin,
                checkout=checkout,
                device_class=DEVICE_CLASSES[user_device[u]],
                booker_country=f"booker_{user_booker[u]}",
                step_index=i,
            ))
            checkin = checkout
        trips.append(Trip(trip_id, user_id, tuple(rows)))
    return TripDataset(trips, provenance="synthetic", seed=seed)


def generate_synthetic(config: SyntheticConfig, seed: int, return_world: bool = False):
    """Generate a dataset (and optionally the world it was drawn from)."""
    world = build_world(config, seed)
    ds = sample_trips(world, seed)
    return (ds, world) if return_world else ds
