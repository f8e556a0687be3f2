"""Prefix expansion and the drop / mask / substitute perturbations."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Iterable, Sequence

import numpy as np

from .baselines import SimilarityIndex
from .dataset import MASK_TOKEN, PAD_TOKEN, Trip
from .errors import TripTooShort

MODES = ("drop", "mask", "substitute", "none")


@dataclass(frozen=True, eq=False)
class PrefixSample:
    """A (prefix, next city) pair.

    ``step_features`` rows align with ``prefix``; column 0 is the stay
    length in days. ``context`` carries trip-level data untouched by
    perturbation.
    """

    trip_id: str
    prefix: tuple[str, ...]
    label_city: str
    label_country: str
    step_features: np.ndarray
    context: Any = None

    def __post_init__(self):
        if len(self.step_features) != len(self.prefix):
            raise ValueError("step features must align with the prefix")

    def __eq__(self, other):
        if not isinstance(other, PrefixSample):
            return NotImplemented
        return (
            self.trip_id == other.trip_id
            and self.prefix == other.prefix
            and self.label_city == other.label_city
            and self.label_country == other.label_country
            and np.array_equal(self.step_features, other.step_features)
            and self.context is other.context
        )

    def __len__(self):
        return len(self.prefix)


@dataclass(frozen=True)
class PerturbationPolicy:
    p_drop: float = 0.1
    p_mask: float = 0.1
    p_substitute: float = 0.1
    p_none: float = 0.7
    substitute_top_k: int = 5
    seed: int = 0

    def __post_init__(self):
        p = self.probabilities
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"mode probabilities {p.tolist()} must be >= 0 and sum to 1")
        if self.substitute_top_k < 1:
            raise ValueError("substitute_top_k must be >= 1")

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([self.p_drop, self.p_mask, self.p_substitute, self.p_none], dtype=np.float64)

    @property
    def is_identity(self) -> bool:
        return self.p_none == 1.0


NO_PERTURBATION = PerturbationPolicy(0.0, 0.0, 0.0, 1.0)


def expand_prefixes(trip: Trip, step_features: np.ndarray | None = None, context: Any = None) -> list[PrefixSample]:
    """``[c1..cn]`` -> ``([c1], c2), ([c1, c2], c3), ..., ([c1..c_{n-1}], cn)``."""
    n = len(trip)
    if n < 2:
        raise TripTooShort(f"trip {trip.trip_id} has {n} reservation(s)")
    if step_features is None:
        step_features = np.array([[r.stay_days] for r in trip.reservations], dtype=np.float64)
    cities = tuple(trip.cities)
    return [
        PrefixSample(
            trip_id=trip.trip_id,
            prefix=cities[:i],
            label_city=cities[i],
            label_country=trip.reservations[i].country_id,
            step_features=step_features[:i],
            context=context,
        )
        for i in range(1, n)
    ]


def _substitutes(similarity: SimilarityIndex | None, city: str, top_k: int) -> list[str]:
    if similarity is None:
        return []
    return [c for c, _ in similarity.neighbors(city)[:top_k] if c != city and c not in (PAD_TOKEN, MASK_TOKEN)]


def apply_perturbation(
    sample: PrefixSample,
    mode: str,
    position: int,
    similarity: SimilarityIndex | None = None,
    top_k: int = 5,
    u: float = 0.0,
) -> tuple[PrefixSample, str]:
    """Apply ``mode`` at ``position``; returns the sample and the mode actually used.

    Drop on a length-1 prefix and substitute without neighbors both fall
    back to mask. ``u`` in [0, 1) picks the substitute uniformly.
    """
    if mode == "none":
        return sample, mode
    prefix = list(sample.prefix)
    if mode == "drop" and len(prefix) == 1:
        mode = "mask"
    if mode == "substitute":
        options = _substitutes(similarity, prefix[position], top_k)
        if not options:
            mode = "mask"
        else:
            prefix[position] = options[min(int(u * len(options)), len(options) - 1)]
            return replace(sample, prefix=tuple(prefix)), mode
    if mode == "mask":
        prefix[position] = MASK_TOKEN
        return replace(sample, prefix=tuple(prefix)), mode
    if mode == "drop":
        del prefix[position]
        feats = np.delete(sample.step_features, position, axis=0)
        return replace(sample, prefix=tuple(prefix), step_features=feats), mode
    raise ValueError(f"unknown perturbation mode {mode!r}")


def perturb_many(
    samples: Sequence[PrefixSample],
    policy: PerturbationPolicy,
    similarity: SimilarityIndex | None,
    rng: np.random.Generator,
    return_info: bool = False,
):
    """Independently perturb each sample; draws are vectorized up front."""
    n = len(samples)
    if policy.is_identity:
        out = list(samples)
        return (out, [("none", -1)] * n) if return_info else out
    modes = rng.choice(len(MODES), size=n, p=policy.probabilities)
    u_pos = rng.random(n)
    u_sub = rng.random(n)
    out, info = [], []
    for s, m, up, us in zip(samples, modes, u_pos, u_sub):
        pos = min(int(up * len(s)), len(s) - 1)
        new, used = apply_perturbation(s, MODES[m], pos, similarity, policy.substitute_top_k, us)
        out.append(new)
        info.append((used, pos if used != "none" else -1))
    return (out, info) if return_info else out


def perturb(
    sample: PrefixSample,
    policy: PerturbationPolicy,
    similarity: SimilarityIndex | None,
    rng: np.random.Generator,
) -> PrefixSample:
    """Pick a mode by ``policy`` and a uniform position, then apply it."""
    return perturb_many([sample], policy, similarity, rng)[0]


def augment_dataset(
    trips: Iterable[Trip],
    policy: PerturbationPolicy,
    similarity: SimilarityIndex | None = None,
    min_trip_len: int = 4,
    rng: np.random.Generator | None = None,
) -> list[PrefixSample]:
    """Prefix-expand trips with at least ``min_trip_len`` stops, then perturb every sample."""
    samples = [s for t in trips if len(t) >= max(min_trip_len, 2) for s in expand_prefixes(t)]
    if rng is None:
        rng = np.random.default_rng(policy.seed)
    return perturb_many(samples, policy, similarity, rng)
