"""Popularity and Item-KNN recommenders plus the shared city-similarity index."""

from __future__ import annotations

from collections import Counter, defaultdict
from itertools import chain
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .dataset import MASK_TOKEN, PAD_TOKEN, Trip, TripDataset

_RESERVED = (PAD_TOKEN, MASK_TOKEN)


def _ranked(counts: Counter) -> list[str]:
    return [c for c, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]


@dataclass
class CountryPopularity:
    counts: dict[str, Counter]
    city_country: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.by_country = {k: _ranked(c) for k, c in self.counts.items()}
        total = Counter()
        for c in self.counts.values():
            total.update(c)
        self.global_counts = total
        self.global_ranking = _ranked(total)

    def ranking(self, country: str | None) -> list[str]:
        return self.by_country.get(country, self.global_ranking)

    def to_arrays(self) -> dict[str, np.ndarray]:
        rows = [(k, c, n) for k, cnt in sorted(self.counts.items()) for c, n in sorted(cnt.items())]
        return {
            "country": np.array([r[0] for r in rows], dtype=str),
            "city": np.array([r[1] for r in rows], dtype=str),
            "count": np.array([r[2] for r in rows], dtype=np.int64),
        }

    @classmethod
    def from_arrays(cls, arrays) -> "CountryPopularity":
        counts: dict[str, Counter] = defaultdict(Counter)
        city_country = {}
        for k, c, n in zip(arrays["country"].tolist(), arrays["city"].tolist(), arrays["count"].tolist()):
            counts[k][c] += int(n)
            city_country.setdefault(c, k)
        return cls(dict(counts), city_country)


def fit_popularity(train: TripDataset | Iterable[Trip], final_only: bool = False) -> CountryPopularity:
    """Count reservations per (country, city); ``final_only`` counts trip endings only."""
    counts: dict[str, Counter] = defaultdict(Counter)
    city_country: dict[str, str] = {}
    trips = train.trips if isinstance(train, TripDataset) else train
    for t in trips:
        rows = t.reservations[-1:] if final_only else t.reservations
        for r in rows:
            counts[r.country_id][r.city_id] += 1
            city_country.setdefault(r.city_id, r.country_id)
    return CountryPopularity(dict(counts), city_country)


def _fill(head: Iterable[str], tail: Iterable[str], k: int, exclude: Iterable[str] = ()) -> list[str]:
    seen = set(_RESERVED) | set(exclude)
    out = []
    for c in chain(head, tail):
        if len(out) == k:
            break
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def popularity_recommend(model: CountryPopularity, last_city_country: str | None, k: int = 4) -> list[str]:
    """Top-k cities of the country, topped up from the global ranking."""
    if k < 1:
        raise ValueError("k must be >= 1")
    country_list = model.by_country.get(last_city_country, [])
    return _fill(country_list, model.global_ranking, k)


@dataclass
class SimilarityIndex:
    cities: list[str]
    neighbor_idx: np.ndarray  # (n_cities, top_k), -1 where empty
    neighbor_score: np.ndarray
    incidence: sparse.csr_matrix | None = None  # row-normalized, kept for exact lookups

    def __post_init__(self):
        self.position = {c: i for i, c in enumerate(self.cities)}

    def __contains__(self, city: str) -> bool:
        return city in self.position

    def neighbors(self, city: str) -> list[tuple[str, float]]:
        i = self.position.get(city)
        if i is None:
            return []
        return [(self.cities[j], float(s)) for j, s in zip(self.neighbor_idx[i], self.neighbor_score[i]) if j >= 0]

    def cosine(self, a: str, b: str) -> float:
        ia, ib = self.position[a], self.position[b]
        return float(self.incidence[ia].multiply(self.incidence[ib]).sum())

    def similarity_matrix(self) -> np.ndarray:
        """Dense all-pairs cosine matrix (desk-scale inspection only)."""
        return (self.incidence @ self.incidence.T).toarray()

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {"cities": np.array(self.cities, dtype=str), "neighbor_idx": self.neighbor_idx,
                "neighbor_score": self.neighbor_score}

    @classmethod
    def from_arrays(cls, arrays) -> "SimilarityIndex":
        return cls(arrays["cities"].tolist(), np.asarray(arrays["neighbor_idx"]), np.asarray(arrays["neighbor_score"]))


def incidence_matrix(trips: Sequence[Trip], weighted: bool = False) -> tuple[list[str], sparse.csr_matrix]:
    """City-by-trip matrix; binary by default, visit counts when ``weighted``."""
    cities = sorted({c for t in trips for c in t.cities})
    pos = {c: i for i, c in enumerate(cities)}
    rows, cols, vals = [], [], []
    for j, t in enumerate(trips):
        cnt = Counter(t.cities)
        for c, n in cnt.items():
            rows.append(pos[c])
            cols.append(j)
            vals.append(float(n) if weighted else 1.0)
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(len(cities), len(trips)))
    return cities, m


def fit_similarity(train: TripDataset | Sequence[Trip], top_k: int = 5, weighted: bool = False) -> SimilarityIndex:
    """Exact cosine neighbors between city trip-incidence vectors."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    trips = train.trips if isinstance(train, TripDataset) else list(train)
    cities, m = incidence_matrix(trips, weighted)
    norms = np.sqrt(np.asarray(m.multiply(m).sum(axis=1)).ravel())
    unit = sparse.diags(1.0 / np.where(norms > 0, norms, 1.0)) @ m
    unit = sparse.csr_matrix(unit)
    sims = (unit @ unit.T).tocsr()

    n = len(cities)
    idx = np.full((n, top_k), -1, dtype=np.int64)
    score = np.zeros((n, top_k), dtype=np.float64)
    for i in range(n):
        lo, hi = sims.indptr[i], sims.indptr[i + 1]
        js, vs = sims.indices[lo:hi], sims.data[lo:hi]
        keep = (js != i) & (vs > 0)
        js, vs = js[keep], vs[keep]
        # city names are sorted, so index order is the id tie-break
        order = np.lexsort((js, -vs))[:top_k]
        idx[i, :len(order)] = js[order]
        score[i, :len(order)] = np.minimum(vs[order], 1.0)
    return SimilarityIndex(cities, idx, score, unit)


def itemknn_recommend(
    index: SimilarityIndex,
    last_city: str,
    k: int = 4,
    fallback: CountryPopularity | None = None,
    exclude: Iterable[str] = (),
    last_country: str | None = None,
) -> list[str]:
    """Nearest neighbors of ``last_city``; gaps are filled from popularity."""
    if k < 1:
        raise ValueError("k must be >= 1")
    head = [c for c, _ in index.neighbors(last_city)]
    tail: Iterable[str] = ()
    if fallback is not None:
        country = last_country or fallback.city_country.get(last_city)
        tail = chain(fallback.by_country.get(country, ()), fallback.global_ranking)
    return _fill(head, tail, k, exclude)


class PopularityRecommender:
    name = "popularity"

    def __init__(self, model: CountryPopularity):
        self.model = model

    def recommend(self, contexts, k: int = 4) -> list[list[str]]:
        return [popularity_recommend(self.model, ctx.visible.countries[-1], k) for ctx in contexts]


class ItemKNNRecommender:
    name = "itemknn"

    def __init__(self, index: SimilarityIndex, fallback: CountryPopularity, exclude_visited: bool = False):
        self.index = index
        self.fallback = fallback
        self.exclude_visited = exclude_visited

    def recommend(self, contexts, k: int = 4) -> list[list[str]]:
        out = []
        for ctx in contexts:
            exclude = ctx.visible.cities if self.exclude_visited else ()
            out.append(itemknn_recommend(self.index, ctx.visible.cities[-1], k, self.fallback, exclude,
                                         ctx.visible.countries[-1]))
        return out
