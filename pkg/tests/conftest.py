import datetime as dt

import numpy as np
import pytest
import torch

from reclab.dataset import Reservation, TripDataset, make_trip
from reclab.synthetic import SyntheticConfig, generate_synthetic

D0 = dt.date(2020, 1, 1)


def trip(trip_id, cities, user="u0", start=D0, stays=None, countries=None, device="desktop", booker="b0"):
    """Back-to-back reservations; countries default to the city name's first letter."""
    stays = stays or [1] * len(cities)
    countries = countries or [c[0].upper() for c in cities]
    rows, day = [], start
    for c, k, s in zip(cities, countries, stays):
        rows.append(Reservation(user, trip_id, c, k, day, day + dt.timedelta(days=int(s)), device, booker))
        day = day + dt.timedelta(days=int(s))
    return make_trip(trip_id, user, rows)


def dataset(*trips):
    return TripDataset(list(trips))


SMALL_WORLD = SyntheticConfig(n_users=300, n_trips=400, n_cities=40, n_countries=4)


@pytest.fixture(scope="session")
def small_ds():
    return generate_synthetic(SMALL_WORLD, seed=3)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(0)
