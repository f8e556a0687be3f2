"""Trip data: loading, filtering, splitting and the city/country vocabulary."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateSplit, MalformedRow, MalformedRows, MissingColumn

PAD_TOKEN = "<pad>"
MASK_TOKEN = "<mask>"
PAD_ID = 0
MASK_ID = 1

DEVICE_CLASSES = ("desktop", "mobile", "tablet")

# Public challenge field names; remap with ``schema=`` when loading other files.
DEFAULT_SCHEMA = {
    "user_id": "user_id",
    "trip_id": "utrip_id",
    "city_id": "city_id",
    "country_id": "hotel_country",
    "booker_country": "booker_country",
    "device_class": "device_class",
    "checkin": "checkin",
    "checkout": "checkout",
}

MAX_MALFORMED_FRACTION = 0.01


@dataclass(frozen=True)
class Reservation:
    user_id: str
    trip_id: str
    city_id: str
    country_id: str
    checkin: dt.date
    checkout: dt.date
    device_class: str = "desktop"
    booker_country: str = ""
    step_index: int = 0

    @property
    def stay_days(self) -> int:
        return (self.checkout - self.checkin).days


@dataclass(frozen=True)
class Trip:
    trip_id: str
    user_id: str
    reservations: tuple[Reservation, ...]

    def __post_init__(self):
        if not self.reservations:
            raise ValueError(f"trip {self.trip_id} has no reservations")

    def __len__(self):
        return len(self.reservations)

    @property
    def cities(self) -> list[str]:
        return [r.city_id for r in self.reservations]

    @property
    def countries(self) -> list[str]:
        return [r.country_id for r in self.reservations]

    @property
    def start(self) -> dt.date:
        return self.reservations[0].checkin

    @property
    def start_month(self) -> int:
        return self.reservations[0].checkin.month

    @property
    def total_duration_days(self) -> int:
        return (self.reservations[-1].checkout - self.reservations[0].checkin).days

    def head(self, n: int) -> "Trip":
        """The trip truncated to its first ``n`` reservations."""
        return Trip(self.trip_id, self.user_id, self.reservations[:n])


@dataclass
class TripDataset:
    trips: list[Trip]
    provenance: str = "loaded"
    seed: int | None = None
    rejected: list[MalformedRow] = field(default_factory=list)

    def __post_init__(self):
        ids = [t.trip_id for t in self.trips]
        if len(set(ids)) != len(ids):
            raise ValueError("trip ids must be unique within a dataset")

    def __len__(self):
        return len(self.trips)

    def __iter__(self):
        return iter(self.trips)

    def subset(self, trips: Iterable[Trip]) -> "TripDataset":
        return TripDataset(list(trips), provenance=self.provenance, seed=self.seed)

    @property
    def trip_ids(self) -> list[str]:
        return [t.trip_id for t in self.trips]

    def reservations(self) -> Iterable[Reservation]:
        for t in self.trips:
            yield from t.reservations


def make_trip(trip_id: str, user_id: str, rows: Sequence[Reservation]) -> Trip:
    """Sort rows by checkin and renumber ``step_index`` from zero."""
    ordered = sorted(rows, key=lambda r: (r.checkin, r.checkout))
    return Trip(
        trip_id,
        user_id,
        tuple(
            Reservation(
                user_id=r.user_id,
                trip_id=trip_id,
                city_id=r.city_id,
                country_id=r.country_id,
                checkin=r.checkin,
                checkout=r.checkout,
                device_class=r.device_class,
                booker_country=r.booker_country,
                step_index=i,
            )
            for i, r in enumerate(ordered)
        ),
    )


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def load_trips(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    delimiter: str = ",",
) -> TripDataset:
    """Read a delimited reservation table and group it into trips.

    ``schema`` maps logical field names (see ``DEFAULT_SCHEMA``) to the
    file's column headers. Rows that fail to parse are collected in
    ``TripDataset.rejected``; if more than 1% of rows are bad the whole
    load is aborted with :class:`MalformedRows`.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        for key in ("user_id", "trip_id", "city_id", "country_id", "checkin", "checkout"):
            if schema[key] not in header:
                raise MissingColumn(schema[key])
        has_device = schema["device_class"] in header
        has_booker = schema["booker_country"] in header

        groups: dict[str, list[Reservation]] = defaultdict(list)
        errors: list[MalformedRow] = []
        n_rows = 0
        # header is line 1
        for line_no, row in enumerate(reader, start=2):
            n_rows += 1
            try:
                checkin = _parse_date(row[schema["checkin"]])
                checkout = _parse_date(row[schema["checkout"]])
            except (ValueError, TypeError, AttributeError) as exc:
                errors.append(MalformedRow(line_no, f"unparseable date ({exc})"))
                continue
            if checkout < checkin:
                errors.append(MalformedRow(line_no, "checkout precedes checkin"))
                continue
            trip_id = row[schema["trip_id"]]
            if not trip_id:
                errors.append(MalformedRow(line_no, "empty trip id"))
                continue
            groups[trip_id].append(
                Reservation(
                    user_id=row[schema["user_id"]],
                    trip_id=trip_id,
                    city_id=row[schema["city_id"]],
                    country_id=row[schema["country_id"]],
                    checkin=checkin,
                    checkout=checkout,
                    device_class=row[schema["device_class"]] if has_device else "desktop",
                    booker_country=row[schema["booker_country"]] if has_booker else "",
                )
            )

    if errors and len(errors) > MAX_MALFORMED_FRACTION * n_rows:
        raise MalformedRows(errors, n_rows)
    trips = [make_trip(tid, rows[0].user_id, rows) for tid, rows in sorted(groups.items())]
    return TripDataset(trips, provenance="loaded", rejected=errors)


def dump_trips(ds: TripDataset, delimiter: str = ",") -> str:
    """Serialize to the challenge column layout; output is byte-stable."""
    buf = io.StringIO()
    cols = list(DEFAULT_SCHEMA.values())
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(cols)
    for trip in ds.trips:
        for r in trip.reservations:
            writer.writerow([
                r.user_id, r.trip_id, r.city_id, r.country_id, r.booker_country,
                r.device_class, r.checkin.isoformat(), r.checkout.isoformat(),
            ])
    return buf.getvalue()


def save_trips(ds: TripDataset, path: str | Path, delimiter: str = ",") -> None:
    Path(path).write_text(dump_trips(ds, delimiter), encoding="utf-8")


def keep_trip(trip: Trip, min_cities: int = 4, max_cities: int = 10, max_duration_days: int = 22) -> bool:
    return min_cities <= len(trip) <= max_cities and trip.total_duration_days <= max_duration_days


def filter_trips(
    ds: TripDataset, min_cities: int = 4, max_cities: int = 10, max_duration_days: int = 22
) -> TripDataset:
    """Keep trips with ``min_cities..max_cities`` stops lasting at most ``max_duration_days``."""
    if min_cities < 1 or max_cities < min_cities:
        raise ValueError(f"bad city bounds [{min_cities}, {max_cities}]")
    return ds.subset(t for t in ds.trips if keep_trip(t, min_cities, max_cities, max_duration_days))


def split_by_trip(
    ds: TripDataset, train_fraction: float = 0.9, seed: int = 0
) -> tuple[TripDataset, TripDataset]:
    """Random partition by whole trips; ``round(fraction * n)`` go to the first part."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(ds)
    n_train = int(round(train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DegenerateSplit(f"{n} trips at fraction {train_fraction} leaves an empty side")
    order = np.random.default_rng(seed).permutation(n)
    train_idx = set(order[:n_train].tolist())
    train = [t for i, t in enumerate(ds.trips) if i in train_idx]
    test = [t for i, t in enumerate(ds.trips) if i not in train_idx]
    return ds.subset(train), ds.subset(test)


@dataclass(frozen=True)
class Vocabulary:
    """City and country id maps. Ids 0 and 1 are reserved for pad and mask in both."""

    cities: tuple[str, ...]
    countries: tuple[str, ...]
    city_country: Mapping[str, str] = field(default_factory=dict, compare=False)

    pad_id = PAD_ID
    mask_id = MASK_ID

    def __post_init__(self):
        object.__setattr__(self, "city_to_id", {c: i + 2 for i, c in enumerate(self.cities)})
        object.__setattr__(self, "country_to_id", {c: i + 2 for i, c in enumerate(self.countries)})
        object.__setattr__(
            self, "id_to_city", {PAD_ID: PAD_TOKEN, MASK_ID: MASK_TOKEN, **{i + 2: c for i, c in enumerate(self.cities)}}
        )
        object.__setattr__(
            self,
            "id_to_country",
            {PAD_ID: PAD_TOKEN, MASK_ID: MASK_TOKEN, **{i + 2: c for i, c in enumerate(self.countries)}},
        )

    @property
    def city_count(self) -> int:
        return len(self.cities)

    @property
    def country_count(self) -> int:
        return len(self.countries)

    @property
    def n_city_ids(self) -> int:
        """Size of the city id space including the reserved ids."""
        return len(self.cities) + 2

    @property
    def n_country_ids(self) -> int:
        return len(self.countries) + 2

    def encode_city(self, token: str) -> int:
        if token == PAD_TOKEN:
            return PAD_ID
        return self.city_to_id.get(token, MASK_ID)

    def encode_country(self, token: str) -> int:
        if token == PAD_TOKEN:
            return PAD_ID
        return self.country_to_id.get(token, MASK_ID)

    def encode_cities(self, tokens: Iterable[str]) -> list[int]:
        get = self.city_to_id.get
        return [PAD_ID if t == PAD_TOKEN else get(t, MASK_ID) for t in tokens]

    def digest(self) -> str:
        h = hashlib.sha256()
        for part in (self.cities, self.countries):
            h.update("\x1f".join(part).encode("utf-8"))
            h.update(b"\x1e")
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {"cities": list(self.cities), "countries": list(self.countries),
                "city_country": dict(self.city_country)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Vocabulary":
        return cls(tuple(d["cities"]), tuple(d["countries"]), dict(d.get("city_country", {})))


def build_vocab(ds: TripDataset | Iterable[Trip]) -> Vocabulary:
    """Sorted id assignment: the lexicographically smallest city gets id 2."""
    trips = ds.trips if isinstance(ds, TripDataset) else list(ds)
    if not trips:
        raise ValueError("cannot build a vocabulary from an empty dataset")
    city_country: dict[str, str] = {}
    countries: set[str] = set()
    for t in trips:
        for r in t.reservations:
            city_country.setdefault(r.city_id, r.country_id)
            countries.add(r.country_id)
    return Vocabulary(tuple(sorted(city_country)), tuple(sorted(countries)), city_country)
