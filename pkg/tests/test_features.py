import datetime as dt

import numpy as np
import pytest

from reclab import features as fx
from reclab.errors import DimensionMismatch, InsufficientData, OutOfOrderEvent, UnknownUser

from conftest import D0, dataset, trip


def days(n):
    return D0 + dt.timedelta(days=n)


def test_column_count_exceeds_thirty():
    n = len(fx.USER_COLUMNS) + len(fx.STEP_COLUMNS) + len(fx.CONTEXT_COLUMNS)
    assert n > 30
    assert len(fx.column_names(fx.USER_COLUMNS, extended=False)) == 7
    assert len(fx.UserStats().as_vector()) == len(fx.USER_COLUMNS)
    assert len(fx.UserStats().as_vector(False)) == 7


def test_cold_start_user():
    ds = dataset(trip("t1", ["a", "b"], user="u"))
    s = fx.user_statistics(ds, "u", "t1")
    assert s.n_trips == 0 and s.n_cities_visited == 0 and s.avg_trip_size == 0.0
    assert s.as_vector(False).sum() == 0


def test_user_hand_counts():
    ds = dataset(
        trip("t1", ["A", "B", "A"], user="u", start=days(0)),
        trip("t2", ["C", "C"], user="u", start=days(10)),
        trip("t3", ["D"], user="u", start=days(40)),
    )
    s = fx.user_statistics(ds, "u", "t3")
    assert s.n_unique_cities == 3
    assert s.avg_unique_cities_per_trip == pytest.approx(1.5)
    assert s.n_trips == 2 and s.n_cities_visited == 5 and s.avg_trip_size == 2.5


def test_most_frequent_month():
    ds = dataset(
        trip("a", ["x"], user="u", start=dt.date(2019, 6, 1)),
        trip("b", ["x"], user="u", start=dt.date(2019, 6, 20)),
        trip("c", ["x"], user="u", start=dt.date(2019, 9, 1)),
        trip("d", ["x"], user="u", start=dt.date(2020, 1, 1)),
    )
    assert fx.user_statistics(ds, "u", "d").most_frequent_month == 6


def test_unknown_user():
    with pytest.raises(UnknownUser):
        fx.user_statistics(dataset(trip("t", ["a"])), "nobody", "t")


def test_city_counts_prefix_oracle():
    history = [
        trip("h1", ["X", "Y"], user="v", start=days(0)),
        trip("h2", ["X"], user="u", start=days(3)),
        trip("h3", ["X"], user="w", start=days(5)),
    ]
    target = trip("t", ["Z", "X", "X"], user="u", start=days(10))
    events = [r for t in history + [target] for r in t.reservations]
    counts = fx.step_stat_matrix([target], events)["t"]
    assert counts[0].tolist() == [0, 0, 0, 0, 0]
    # X: 3 global, 1 by this user; second X in the trip sees the first
    assert counts[1][:3].tolist() == [3, 1, 0]
    assert counts[2][:3].tolist() == [3, 1, 1]


def test_first_event_all_zero():
    t = trip("t", ["a", "b"])
    assert fx.step_stat_matrix([t], t.reservations)["t"].sum() == 0


def test_counter_out_of_order():
    c = fx.CityCounter()
    c.begin_trip("a", "u", days(5))
    with pytest.raises(OutOfOrderEvent):
        c.begin_trip("b", "u", days(1))


def test_no_leakage_via_time_truncation(small_ds):
    """Step features of step t match a recomputation on a dataset cut at step t's checkin."""
    trips = small_ds.trips
    events = [r for t in trips for r in t.reservations]
    full = fx.step_stat_matrix(trips, events)
    index = fx.UserIndex(trips)
    for t in trips[::25]:
        for k, r in enumerate(t.reservations):
            cut = [e for e in events if e.checkin < t.start and e.trip_id != t.trip_id]
            cut += list(t.reservations[:k + 1])
            mine = fx.step_stat_matrix([t.head(k + 1)], cut)[t.trip_id]
            np.testing.assert_array_equal(mine[k], full[t.trip_id][k])
        # user statistics only see complete earlier trips
        earlier = [u for u in trips if u.user_id == t.user_id and u.reservations[-1].checkin < t.start]
        cut_index = fx.UserIndex(earlier + [t])
        a = fx.user_statistics(index, t.user_id, t)
        b = fx.user_statistics(cut_index, t.user_id, t)
        assert a == b


def test_normalizer_examples():
    s = fx.fit_normalizer([[2.0, 0.0], [2.0, 10.0]])
    z = fx.apply_normalizer(s, [[2.0, 0.0], [2.0, 10.0]])
    np.testing.assert_allclose(z, [[0, -1], [0, 1]])
    assert s.constant.tolist() == [True, False]
    # applying to other data does not refit
    assert fx.apply_normalizer(s, [[2.0, 10.0]])[0, 1] == pytest.approx(1.0)


def test_normalizer_round_trip(rng):
    x = rng.normal(3.0, 2.0, size=(200, 6))
    x[:, 2] = 7.0
    z = fx.apply_normalizer(fx.fit_normalizer(x), x)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(np.delete(z.std(axis=0), 2), 1.0, atol=1e-12)


def test_autoencoder_identity_case(rng):
    x = rng.normal(size=(300, 5))
    enc = fx.train_user_autoencoder(x, latent_dim=100, seed=0, epochs=400)
    assert enc.latent_dim == 100
    assert enc.heldout_mse < 1e-3


def test_autoencoder_deterministic_and_pure(rng):
    x = rng.normal(size=(60, 8))
    a = fx.train_user_autoencoder(x, seed=1, epochs=5)
    b = fx.train_user_autoencoder(x, seed=1, epochs=5)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa.detach().numpy(), pb.detach().numpy())
    np.testing.assert_array_equal(a.encode(x[:3]), a.encode(x[:3]))
    assert a.encode(x[:1]).shape == (1, 100)
    with pytest.raises(DimensionMismatch):
        a.encode(x[:, :3])
    with pytest.raises(InsufficientData):
        fx.train_user_autoencoder(np.ones((5, 3)))


def test_embedding_distances(rng):
    x = rng.normal(size=(200, 8))
    enc = fx.train_user_autoencoder(x, seed=0, epochs=50)
    a, c = x[0], x[1]
    za, zb, zc = enc.encode(np.stack([a, a.copy(), c]))
    assert np.linalg.norm(za - zb) == 0.0
    assert np.linalg.norm(za - zb) < np.linalg.norm(za - zc)


def test_write_feature_matrix(tmp_path):
    p = tmp_path / "f.csv"
    fx.write_feature_matrix(p, ["a", "b"], [[1, 2]], index=["u"])
    assert p.read_text().splitlines() == ["key,a,b", "u,1.0,2.0"]
    with pytest.raises(DimensionMismatch):
        fx.write_feature_matrix(p, ["a"], [[1, 2]])
