import random

import pytest
from hypothesis import given, settings, strategies as st

from reclab.dataset import (MASK_ID, PAD_ID, Vocabulary, build_vocab, dump_trips, filter_trips, keep_trip,
                            load_trips, save_trips, split_by_trip)
from reclab.errors import DegenerateSplit, MalformedRows, MissingColumn

from conftest import dataset, trip

HEADER = "user_id,utrip_id,city_id,hotel_country,booker_country,device_class,checkin,checkout\n"


def write(tmp_path, rows, header=HEADER):
    p = tmp_path / "trips.csv"
    p.write_text(header + "".join(rows))
    return p


def row(trip_id, city, checkin, checkout, user="u1"):
    return f"{user},{trip_id},{city},K,B,mobile,{checkin},{checkout}\n"


def test_single_trip_grouping(tmp_path):
    rows = [row("t1", f"c{i}", f"2020-01-0{i + 1}", f"2020-01-0{i + 2}") for i in range(4)]
    ds = load_trips(write(tmp_path, rows))
    assert len(ds) == 1 and len(ds.trips[0]) == 4
    assert [r.step_index for r in ds.trips[0].reservations] == [0, 1, 2, 3]


def test_malformed_row_reported(tmp_path):
    good = [row(f"t{i}", "c", "2020-01-01", "2020-01-02") for i in range(199)]
    bad = [row("tx", "c", "2020-01-05", "2020-01-03")]
    ds = load_trips(write(tmp_path, good + bad))
    assert len(ds.rejected) == 1
    assert ds.rejected[0].line_no == 201
    # one bad row out of three is far beyond the tolerance
    with pytest.raises(MalformedRows) as exc:
        load_trips(write(tmp_path, good[:2] + bad))
    assert exc.value.errors[0].line_no == 4


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn):
        load_trips(write(tmp_path, [], header="user_id,utrip_id,city_id\n"))


def test_schema_remap(tmp_path):
    header = "uid;trip;city;country;checkin;checkout\n"
    p = tmp_path / "x.csv"
    p.write_text(header + "a;t;Paris;FR;2020-01-01;2020-01-03\n")
    schema = {"user_id": "uid", "trip_id": "trip", "city_id": "city", "country_id": "country"}
    ds = load_trips(p, schema, delimiter=";")
    assert ds.trips[0].cities == ["Paris"] and ds.trips[0].total_duration_days == 2


def test_shuffled_rows_sorted_per_trip(tmp_path):
    rows = []
    for t in range(3):
        for i in range(4):
            rows.append((f"t{t}", f"c{t}{i}", f"2020-0{t + 1}-1{i}", f"2020-0{t + 1}-1{i + 1}"))
    shuffled = rows[:]
    random.Random(5).shuffle(shuffled)
    ds = load_trips(write(tmp_path, [row(*r) for r in shuffled]))
    # oracle: sort then group
    expected = {}
    for r in sorted(rows, key=lambda r: (r[0], r[2])):
        expected.setdefault(r[0], []).append(r[1])
    assert {t.trip_id: t.cities for t in ds.trips} == expected


def test_dump_round_trip(tmp_path, small_ds):
    p = tmp_path / "d.csv"
    save_trips(small_ds, p)
    again = load_trips(p)
    assert dump_trips(again) == dump_trips(small_ds.subset(sorted(small_ds.trips, key=lambda t: t.trip_id)))


def test_filter_boundaries():
    assert not keep_trip(trip("a", ["a", "b", "c"]))
    assert keep_trip(trip("b", ["a", "b", "c", "d"], stays=[10, 5, 5, 2]))  # exactly 22 days
    assert not keep_trip(trip("c", ["a", "b", "c", "d"], stays=[10, 5, 5, 3]))
    assert not keep_trip(trip("d", list("abcdefghijk")))


def test_filter_matches_predicate_scan():
    rnd = random.Random(1)
    trips = []
    for i in range(10):
        n = rnd.randint(2, 12)
        trips.append(trip(f"t{i}", [f"c{j}" for j in range(n)], stays=[rnd.randint(1, 5) for _ in range(n)]))
    ds = dataset(*trips)
    kept = filter_trips(ds)
    oracle = [t.trip_id for t in trips if 4 <= len(t) <= 10 and sum(r.stay_days for r in t.reservations) <= 22]
    assert kept.trip_ids == oracle
    assert filter_trips(kept).trip_ids == kept.trip_ids


def test_split_small():
    ds = dataset(*[trip(f"t{i}", ["a", "b"]) for i in range(10)])
    a, b = split_by_trip(ds, 0.9, seed=7)
    assert (len(a), len(b)) == (9, 1)
    a2, b2 = split_by_trip(ds, 0.9, seed=7)
    assert a2.trip_ids == a.trip_ids and b2.trip_ids == b.trip_ids
    c, d = split_by_trip(ds, 0.5, seed=1)
    assert set(c.trip_ids).isdisjoint(d.trip_ids)
    assert set(c.trip_ids) | set(d.trip_ids) == set(ds.trip_ids)


def test_split_large_set_algebra():
    ds = dataset(*[trip(f"t{i:04d}", ["a", "b"]) for i in range(1000)])
    a, b = split_by_trip(ds, 0.9, seed=0)
    sa, sb = set(a.trip_ids), set(b.trip_ids)
    assert (len(sa), len(sb)) == (900, 100)
    assert not sa & sb and sa | sb == set(ds.trip_ids)


def test_split_degenerate():
    with pytest.raises(DegenerateSplit):
        split_by_trip(dataset(trip("t", ["a"])), 0.9)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_split_is_partition(n, frac, seed):
    ds = dataset(*[trip(f"t{i}", ["a"]) for i in range(n)])
    try:
        a, b = split_by_trip(ds, frac, seed)
    except DegenerateSplit:
        return
    assert sorted(a.trip_ids + b.trip_ids) == sorted(ds.trip_ids)
    assert not set(a.trip_ids) & set(b.trip_ids)


def test_vocab_sorted_assignment():
    v = build_vocab([trip("t", ["B", "A"])])
    assert v.city_to_id == {"A": 2, "B": 3}
    assert v.encode_city("zzz") == MASK_ID
    assert MASK_ID != PAD_ID and MASK_ID not in v.city_to_id.values()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.text("abcdef", min_size=1, max_size=4), min_size=1, max_size=40))
def test_vocab_bijection(cities):
    v = build_vocab([trip("t", cities)])
    for c in cities:
        assert v.id_to_city[v.city_to_id[c]] == c
    assert min(v.city_to_id.values()) == 2
    assert Vocabulary.from_dict(v.to_dict()).digest() == v.digest()


def test_vocab_scale():
    v = Vocabulary(tuple(f"c{i}" for i in range(38542)), ("x",))
    assert v.city_count == 38542 and v.n_city_ids == 38544
