"""A tour of the synthetic trip world that stands in for the booking logs.

Run: python3 demos/01_synthetic_world.py
"""
from collections import Counter

import numpy as np

from reclab.dataset import build_vocab, filter_trips, split_by_trip
from reclab.synthetic import SyntheticConfig, generate_synthetic

cfg = SyntheticConfig()  # 20k trips, 200 cities, 10 countries
ds, world = generate_synthetic(cfg, seed=13, return_world=True)
print(f"{len(ds)} trips, {sum(len(t) for t in ds.trips)} reservations")

# trip lengths follow the configured weights over 4..10 stops
lengths = Counter(len(t) for t in ds.trips)
print("length histogram:", dict(sorted(lengths.items())))

# the route graph concentrates transitions: mass on the 3 preferred successors
top3 = np.sort(world.transitions, axis=1)[:, -3:].sum(axis=1)
print(f"mean top-3 transition mass {top3.mean():.3f} (pure popularity would give "
      f"{np.sort(world.popularity)[-3:].sum():.3f})")

# seasonality: the same previous city yields different final-city odds by month
prev = int(np.argmax(world.popularity))
jan, jul = world.final_distribution(prev, 1), world.final_distribution(prev, 7)
print(f"total variation between January and July final-city laws: {0.5 * np.abs(jan - jul).sum():.3f}")

# the filter keeps 4..10 stops and at most 22 days; split is by whole trips
train, test = split_by_trip(ds, 0.9, seed=13)
train = filter_trips(train)
vocab = build_vocab(train)
print(f"train {len(train)} / test {len(test)} trips, {vocab.city_count} cities, "
      f"{vocab.country_count} countries in the vocabulary")
print("first trip:", ds.trips[0].cities, "starting", ds.trips[0].start)
